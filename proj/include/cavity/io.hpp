#pragma once
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavity/cavity_solver.hpp"
#include "cavity/errors.hpp"
#include "cavity/montecarlo.hpp"
#include "cavity/phase_boundary.hpp"
#include "cavity/priors.hpp"
#include "cavity/scaling.hpp"
#include "cavity/version.hpp"

namespace cavity {

// 17 significant digits: enough to round-trip an IEEE double exactly.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Non-finite values become empty CSV fields rather than poisoning numeric parsers.
inline std::string csv_field(double v) { return std::isfinite(v) ? fmt17(v) : std::string(); }

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Relative output paths are prefixed by CAVITY_OUTPUT_DIR when it is set.
inline std::filesystem::path resolve_output(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.is_absolute()) return p;
    if (const char* dir = std::getenv("CAVITY_OUTPUT_DIR"); dir && *dir)
        return std::filesystem::path(dir) / p;
    return p;
}

// Whole-file replace through a temp file in the same directory, so readers never
// observe a half-written artifact.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    const std::filesystem::path tmp =
        path.parent_path() / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp, ec);
            throw io_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw io_error("rename failed for " + path.string());
    }
}

// CSV with a '#' prelude carrying the resolved config and version, then an
// RFC-4180 header row and 17-significant-digit data rows.
inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& prelude,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (const std::string& line : prelude) out += "# " + line + "\n";
    for (std::size_t i = 0; i < header.size(); ++i)
        out += (i ? "," : "") + csv_escape(header[i]);
    out += "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw parameter_error("csv row width does not match the header");
        for (std::size_t i = 0; i < row.size(); ++i)
            out += (i ? "," : "") + csv_field(row[i]);
        out += "\n";
    }
    atomic_write(path, out);
}

// One top-level object {config, results, failures, version}.
inline nlohmann::json result_document(nlohmann::json config, nlohmann::json results,
                                      nlohmann::json failures = nlohmann::json::array()) {
    return {{"config", std::move(config)},
            {"results", std::move(results)},
            {"failures", std::move(failures)},
            {"version", version_string()}};
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    atomic_write(path, doc.dump(2) + "\n");
}

inline void to_json(nlohmann::json& j, const SignalPrior& prior) {
    switch (prior.kind()) {
        case SignalPrior::Kind::gaussian:
            j = {{"kind", "gaussian"}, {"variance", prior.variance()}};
            break;
        case SignalPrior::Kind::power_law:
            j = {{"kind", "power_law"}, {"gamma", prior.gamma()}, {"cutoff", prior.cutoff()}};
            break;
        case SignalPrior::Kind::gapped:
            j = {{"kind", "gapped"}, {"gap", prior.gap()}, {"width", prior.width()}};
            break;
    }
}

inline void to_json(nlohmann::json& j, const CavityState& st) {
    j = {{"tau", st.tau},
         {"sigma_xi_sq", st.sigma_xi_sq},
         {"theta", st.theta},
         {"rho_hat", st.rho_hat},
         {"chi_bar", st.chi_bar},
         {"sigma_eff_sq", st.sigma_eff_sq},
         {"q", st.q},
         {"residual1", st.residual1},
         {"residual2", st.residual2},
         {"perfect", st.perfect},
         {"multiple_roots", st.multiple_roots}};
}

inline void to_json(nlohmann::json& j, const BoundaryPoint& bp) {
    j = {{"tau_c", bp.tau_c}, {"alpha_c", bp.alpha_c}, {"rho_c", bp.rho_c}};
}

inline void to_json(nlohmann::json& j, const ScalingFit& fit) {
    j = {{"exponent", fit.exponent},
         {"prefactor", fit.prefactor},
         {"r_squared", fit.r_squared},
         {"exponent_stderr", fit.exponent_stderr},
         {"window", {{"low", fit.window_low}, {"high", fit.window_high}}},
         {"points_used", fit.points_used}};
}

inline void to_json(nlohmann::json& j, const McEstimate& est) {
    j = {{"mse", est.mse_mean},
         {"stderr", est.mse_stderr},
         {"rho_hat", est.rho_hat_mean},
         {"trials", est.trials},
         {"kkt_max", est.kkt_max_violation}};
}

inline void to_json(nlohmann::json& j, const OptimalLambda& opt) {
    j = {{"lambda_star", opt.lambda_star}, {"q_min", opt.q_min}, {"monotone", opt.monotone}};
}

} // namespace cavity
