#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cavity/cavity_solver.hpp"
#include "cavity/io.hpp"
#include "cavity/montecarlo.hpp"
#include "cavity/phase_boundary.hpp"
#include "cavity/priors.hpp"
#include "cavity/scaling.hpp"
#include "cavity/svg.hpp"

using nlohmann::json;
using namespace cavity;

namespace {

// "lin:lo:hi:n", "log:lo:hi:n" or "list:v1,v2,..."; values come out ascending.
struct GridSpec {
    std::string text;
    std::vector<double> values;

    static GridSpec parse(const std::string& text) {
        GridSpec g;
        g.text = text;
        std::vector<std::string> parts;
        std::string cur;
        for (char c : text) {
            if (c == ':') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(cur);
        const auto num = [&](const std::string& s) {
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
                return v;
            } catch (...) {
                throw parameter_error("bad number '" + s + "' in grid '" + text + "'");
            }
        };
        if (parts[0] == "list" && parts.size() == 2) {
            std::string item;
            for (char c : parts[1] + ",") {
                if (c == ',') {
                    if (!item.empty()) g.values.push_back(num(item));
                    item.clear();
                } else {
                    item += c;
                }
            }
            if (g.values.empty()) throw parameter_error("empty grid '" + text + "'");
            for (std::size_t i = 1; i < g.values.size(); ++i)
                if (!(g.values[i] > g.values[i - 1]))
                    throw parameter_error("grid '" + text + "' must be strictly ascending");
            return g;
        }
        if (parts.size() != 4 || (parts[0] != "lin" && parts[0] != "log"))
            throw parameter_error("grid '" + text +
                                  "' must be lin:lo:hi:n, log:lo:hi:n or list:v1,v2,...");
        const double lo = num(parts[1]), hi = num(parts[2]);
        const double nd = num(parts[3]);
        const auto n = static_cast<std::size_t>(nd);
        if (!(nd == static_cast<double>(n)) || n < 2)
            throw parameter_error("grid '" + text + "' needs an integer point count >= 2");
        if (!(lo < hi)) throw parameter_error("grid '" + text + "' needs lo < hi");
        if (parts[0] == "log") {
            if (!(lo > 0.0)) throw parameter_error("log grid '" + text + "' needs lo > 0");
            g.values = cavity::detail::logspace(lo, hi, n);
        } else {
            g.values.resize(n);
            for (std::size_t i = 0; i < n; ++i)
                g.values[i] =
                    lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
            g.values.back() = hi;
        }
        return g;
    }

    bool logscale() const { return text.rfind("log:", 0) == 0; }
};

// Flat or one-level-nested JSON object mapped onto CLI11's config items, so
// config files mirror the flag structure; command-line flags override.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        const json j = json::parse(input);
        std::vector<CLI::ConfigItem> out;
        flatten(j, {}, out);
        return out;
    }

  private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }
    static void flatten(const json& j, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& out) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            if (it.value().is_object()) {
                auto nested = parents;
                nested.push_back(it.key());
                flatten(it.value(), nested, out);
            } else if (it.value().is_array()) {
                for (const auto& e : it.value()) item.inputs.push_back(scalar(e));
                out.push_back(item);
            } else {
                item.inputs.push_back(scalar(it.value()));
                out.push_back(item);
            }
        }
    }
};

// Fixed contiguous partition; deterministic regardless of scheduling. The body
// receives the index range [lo, hi) of one chunk.
void parallel_chunks(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& body) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        body(0, count);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr first;
    std::mutex mtx;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = count * t / threads, hi = count * (t + 1) / threads;
        pool.emplace_back([&, lo, hi] {
            try {
                body(lo, hi);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(mtx);
                if (!first) first = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

const char* const palette[6] = {"#d62728", "#1f77b4", "#2ca02c",
                                "#ff7f0e", "#9467bd", "#8c564b"};

struct SpecFlags {
    double alpha = 0.5, rho = 0.2, lambda1 = 0.0, lambda2 = 0.0;
    double sigma_sq = 1.0, noise = 0.0;
    std::string prior = "gaussian:1";

    void add_to(CLI::App* cmd, bool with_alpha = true) {
        if (with_alpha) cmd->add_option("--alpha", alpha, "measurement ratio M/N");
        cmd->add_option("--rho", rho, "density of nonzero signal entries");
        cmd->add_option("--lambda1", lambda1, "l1 penalty");
        cmd->add_option("--lambda2", lambda2, "l2 penalty");
        cmd->add_option("--sigma-sq", sigma_sq, "fidelity weight sigma^2");
        cmd->add_option("--noise", noise, "measurement noise variance sigma_zeta^2");
        cmd->add_option("--prior", prior,
                        "gaussian:v | power_law:gamma[:cutoff] | gapped:gap:width");
    }

    EnsembleSpec build() const {
        EnsembleSpec s;
        s.alpha = alpha;
        s.rho = rho;
        s.lambda1 = lambda1;
        s.lambda2 = lambda2;
        s.sigma_sq = sigma_sq;
        s.sigma_zeta_sq = noise;
        s.prior = SignalPrior::parse(prior);
        s.validate();
        return s;
    }

    json echo() const {
        json pj;
        to_json(pj, SignalPrior::parse(prior));
        return {{"alpha", alpha},       {"rho", rho},
                {"lambda1", lambda1},   {"lambda2", lambda2},
                {"sigma_sq", sigma_sq}, {"sigma_zeta_sq", noise},
                {"prior", pj}};
    }
};

struct OutputFlags {
    std::string output, format = "auto", svg;

    void add_to(CLI::App* cmd, const std::string& default_output, bool with_svg = true) {
        output = default_output;
        cmd->add_option("--output", output, "artifact path (CAVITY_OUTPUT_DIR prefixes)");
        cmd->add_option("--format", format, "csv | json | auto (by extension)")
            ->check(CLI::IsMember({"csv", "json", "auto"}));
        if (with_svg) cmd->add_option("--svg", svg, "also emit an SVG plot here");
    }

    bool json_format() const {
        if (format == "json") return true;
        if (format == "csv") return false;
        return std::filesystem::path(output).extension() == ".json";
    }
};

void emit(const OutputFlags& out, const json& config,
          const std::vector<std::string>& header,
          const std::vector<std::vector<double>>& rows, const json& results,
          const json& failures) {
    const auto path = resolve_output(out.output);
    if (out.json_format()) {
        write_json(path, result_document(config, results, failures));
    } else {
        write_csv(path, {version_string(), "config: " + config.dump()}, header, rows);
        if (!failures.empty())
            write_json(std::filesystem::path(path.string() + ".failures.json"),
                       result_document(config, json::array(), failures));
    }
    std::printf("wrote %s\n", path.string().c_str());
}

std::vector<std::vector<double>> state_rows(const std::vector<double>& grid,
                                            const std::vector<std::optional<CavityState>>& sts) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!sts[i]) continue;
        const CavityState& st = *sts[i];
        rows.push_back({grid[i], st.q, st.sigma_xi_sq, st.tau, st.theta, st.rho_hat,
                        st.chi_bar, st.sigma_eff_sq, st.perfect ? 1.0 : 0.0});
    }
    return rows;
}

const std::vector<std::string> state_header = {
    "x", "q", "sigma_xi_sq", "tau", "theta", "rho_hat", "chi_bar", "sigma_eff_sq", "perfect"};

// ---------------------------------------------------------------------------

int run_boundary(const std::string& grid_text, double ratio, const std::string& prior_text,
                 const OutputFlags& out) {
    const GridSpec grid = GridSpec::parse(grid_text);
    const SignalPrior prior = SignalPrior::parse(prior_text);
    if (!(ratio >= 0.0)) throw parameter_error("lambda2/lambda1 ratio must be >= 0");
    const double kappa = en_kappa(ratio, prior.moments());

    json config = {{"command", "boundary"}, {"tau_grid", grid.text}, {"ratio", ratio}};
    to_json(config["prior"], prior);

    std::vector<std::vector<double>> rows;
    json results = json::array();
    for (double tau : grid.values) {
        const BoundaryPoint bp = boundary_parametric(tau, kappa);
        const double asym = bp_sparse_asymptote(bp.alpha_c);
        rows.push_back({tau, bp.alpha_c, bp.rho_c, asym});
        json r;
        to_json(r, bp);
        r["rho_asymptote"] = asym;
        results.push_back(r);
        std::printf("tau=%-12.6g alpha_c=%-12.8g rho_c=%-12.8g\n", tau, bp.alpha_c, bp.rho_c);
    }
    emit(out, config, {"tau", "alpha_c", "rho_c", "rho_asymptote"}, rows, results,
         json::array());

    if (!out.svg.empty()) {
        SvgFigure fig(0.0, 1.0, 0.0, 1.0, false, false, "perfect-reconstruction boundary",
                      "alpha", "rho");
        std::vector<std::pair<double, double>> curve, asym;
        for (const auto& row : rows) {
            curve.emplace_back(row[1], row[2]);
            if (std::isfinite(row[3]) && row[3] <= 1.0) asym.emplace_back(row[1], row[3]);
        }
        fig.polyline(curve, palette[0], 2.0);
        fig.polyline(asym, palette[1], 1.5, /*dashed=*/true);
        fig.legend_entry("boundary", palette[0]);
        fig.legend_entry("alpha/(2 ln(1/alpha))", palette[1]);
        atomic_write(resolve_output(out.svg), fig.render("config: " + config.dump()));
    }
    return 0;
}

CavityState solve_point(const EnsembleSpec& spec, bool limit, bool ridge) {
    if (ridge) return solve_ridge(spec, limit);
    try {
        return solve_en_full(spec, limit);
    } catch (const phase_error&) {
        return solve_en_perfect_phase(spec);
    }
}

int run_solve(const SpecFlags& sf, bool limit, bool ridge, const OutputFlags& out) {
    const EnsembleSpec spec = sf.build();
    const CavityState st = solve_point(spec, limit, ridge);
    json config = sf.echo();
    config["command"] = "solve";
    config["limit"] = limit;
    config["ridge"] = ridge;
    json result;
    to_json(result, st);
    std::printf("q=%.10g tau=%.10g rho_hat=%.10g perfect=%d\n", st.q, st.tau, st.rho_hat,
                st.perfect ? 1 : 0);
    if (out.json_format()) {
        emit(out, config, {}, {}, result, json::array());
    } else {
        emit(out, config, state_header,
             {{0.0, st.q, st.sigma_xi_sq, st.tau, st.theta, st.rho_hat, st.chi_bar,
               st.sigma_eff_sq, st.perfect ? 1.0 : 0.0}},
             result, json::array());
    }
    return 0;
}

int run_sweep(const SpecFlags& sf, const std::string& var, const std::string& grid_text,
              bool limit, bool ridge, std::size_t threads, const OutputFlags& out) {
    const GridSpec grid = GridSpec::parse(grid_text);
    const EnsembleSpec base = sf.build();
    const auto make_spec = [&](double v) {
        EnsembleSpec s = base;
        if (var == "alpha")
            s.alpha = v;
        else if (var == "rho")
            s.rho = v;
        else if (var == "lambda1")
            s.lambda1 = v;
        else if (var == "noise")
            s.sigma_zeta_sq = v;
        else
            throw parameter_error("sweep variable must be alpha, rho, lambda1 or noise");
        s.validate();
        return s;
    };
    make_spec(grid.values.front());

    json config = sf.echo();
    config["command"] = "sweep";
    config["var"] = var;
    config["grid"] = grid.text;
    config["limit"] = limit;
    config["ridge"] = ridge;
    config["threads"] = threads;

    const std::size_t npts = grid.values.size();
    std::vector<std::optional<CavityState>> states(npts);
    std::vector<std::string> errors(npts);
    // one independent continuation chain per chunk keeps warm starts off the
    // thread boundaries
    parallel_chunks(npts, threads, [&](std::size_t lo, std::size_t hi) {
        if (ridge) {
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    states[i] = solve_ridge(make_spec(grid.values[i]), limit);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
            return;
        }
        // descending continuation chain; perfect-phase points (possible in the
        // limit mode) are dispatched explicitly and never seed warm starts
        std::optional<std::array<double, 2>> init;
        for (std::size_t i = hi; i-- > lo;) {
            const EnsembleSpec s = make_spec(grid.values[i]);
            try {
                try {
                    const CavityState st = solve_en_full(s, limit, init);
                    init = std::array<double, 2>{st.tau, std::sqrt(st.sigma_xi_sq)};
                    states[i] = st;
                } catch (const phase_error&) {
                    states[i] = solve_en_perfect_phase(s);
                }
            } catch (const parameter_error&) {
                throw;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    });

    json results = json::array(), failures = json::array();
    for (std::size_t i = 0; i < npts; ++i) {
        if (states[i]) {
            json r;
            to_json(r, *states[i]);
            r[var] = grid.values[i];
            results.push_back(r);
            std::printf("%s=%-12.6g q=%-14.10g tau=%-12.8g\n", var.c_str(), grid.values[i],
                        states[i]->q, states[i]->tau);
        } else {
            failures.push_back({{var, grid.values[i]}, {"error", errors[i]}});
            std::printf("%s=%-12.6g FAILED (%s)\n", var.c_str(), grid.values[i],
                        errors[i].c_str());
        }
    }
    emit(out, config, state_header, state_rows(grid.values, states), results, failures);

    if (!out.svg.empty()) {
        std::vector<std::pair<double, double>> pts;
        double qmax = 0.0;
        for (const auto& row : state_rows(grid.values, states)) {
            pts.emplace_back(row[0], row[1]);
            qmax = std::max(qmax, row[1]);
        }
        SvgFigure fig(grid.values.front(), grid.values.back(), 0.0,
                      qmax > 0.0 ? 1.1 * qmax : 1.0, grid.logscale(), false,
                      "cavity sweep over " + var, var, "q");
        fig.polyline(pts, palette[1], 2.0);
        fig.markers(pts, palette[1], 2.5);
        atomic_write(resolve_output(out.svg), fig.render("config: " + config.dump()));
    }
    return failures.empty() ? 0 : 3;
}

int run_exponents(const std::string& regime, const std::string& penalty_text, double gamma,
                  std::string prior_text, double rho, double ratio, double window_low,
                  double window_high, double alpha_factor, const OutputFlags& out) {
    if (regime != "alpha" && regime != "noise" && regime != "lambda")
        throw parameter_error("regime must be alpha, noise or lambda");
    if (penalty_text != "bp" && penalty_text != "en")
        throw parameter_error("penalty must be bp or en");
    const Penalty penalty = penalty_text == "bp" ? Penalty::bp : Penalty::en;
    if (prior_text.empty()) {
        if (gamma == 0.0)
            prior_text = "gaussian:1";
        else
            prior_text = "power_law:" + fmt17(gamma) + ":1";
    }
    const SignalPrior prior = SignalPrior::parse(prior_text);
    const bool gapped = prior.kind() == SignalPrior::Kind::gapped;
    const bool power_law = prior.kind() == SignalPrior::Kind::power_law;
    const double g = power_law ? prior.gamma() : 0.0;

    if (std::isnan(window_low)) window_low = regime == "alpha" ? 1e-4 : 1e-6;
    if (std::isnan(window_high)) window_high = regime == "alpha" ? 1e-2 : 1e-3;
    if (alpha_factor != 1.0 && regime != "lambda")
        throw parameter_error("--alpha-factor only applies to the lambda regime");

    ScalingFit fit;
    double expected = 0.0;
    if (regime == "alpha") {
        fit = exponent_alpha_approach(penalty, rho, prior, ratio, window_low, window_high);
        expected = 2.0 / (1.0 + g);
    } else if (regime == "noise") {
        fit = exponent_noise(penalty, rho, prior, ratio, window_low, window_high);
        expected = 2.0 / (3.0 + g);
    } else {
        std::optional<double> override;
        if (alpha_factor != 1.0) {
            const double r = penalty == Penalty::bp ? 0.0 : ratio;
            override = alpha_factor * cavity::detail::critical_alpha(penalty, rho, r, prior);
        }
        fit = exponent_lambda(penalty, rho, prior, ratio, window_low, window_high, override);
        expected = penalty == Penalty::bp ? 4.0 / (3.0 + g) : 2.0 / (2.0 + g);
    }

    json config = {{"command", "exponents"}, {"regime", regime},
                   {"penalty", penalty_text}, {"rho", rho},
                   {"ratio", ratio},          {"alpha_factor", alpha_factor}};
    to_json(config["prior"], prior);

    json result = {{"regime", regime},
                   {"gamma", gapped ? json() : json(g)},
                   {"class", gapped ? "log" : "power"},
                   {"expected", gapped ? json() : json(expected)},
                   {"fitted", fit.exponent},
                   {"ci", 1.96 * fit.exponent_stderr},
                   {"r2", fit.r_squared},
                   {"window", {{"low", fit.window_low}, {"high", fit.window_high}}},
                   {"prefactor", fit.prefactor},
                   {"points_used", fit.points_used}};
    std::printf("regime=%s penalty=%s fitted=%.6g expected=%.6g r2=%.8g\n", regime.c_str(),
                penalty_text.c_str(), fit.exponent, expected, fit.r_squared);
    if (!out.json_format())
        throw parameter_error("exponents emits JSON; use a .json output path");
    emit(out, config, {}, {}, result, json::array());
    return 0;
}

int run_tradeoff(double rho, double alpha_factor, double alpha_flag,
                 const std::string& noise_grid_text, const std::string& lambda_grid_text,
                 const std::string& prior_text, std::size_t threads, const OutputFlags& out) {
    const GridSpec noise_grid = GridSpec::parse(noise_grid_text);
    const GridSpec lambda_grid = GridSpec::parse(lambda_grid_text);
    const SignalPrior prior = SignalPrior::parse(prior_text);
    const double alpha_c = bp_alpha_c(rho).first;
    const double alpha = std::isnan(alpha_flag) ? alpha_factor * alpha_c : alpha_flag;
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw parameter_error("resolved alpha must lie in (0,1]; adjust --alpha-factor");

    json config = {{"command", "tradeoff"},
                   {"rho", rho},
                   {"alpha", alpha},
                   {"noise_grid", noise_grid.text},
                   {"lambda_grid", lambda_grid.text}};
    to_json(config["prior"], prior);

    const std::size_t nn = noise_grid.values.size();
    std::vector<std::vector<std::optional<double>>> qcurves(
        nn, std::vector<std::optional<double>>(lambda_grid.values.size()));
    std::vector<std::optional<OptimalLambda>> optima(nn);
    std::vector<std::string> errors(nn);

    parallel_chunks(nn, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            EnsembleSpec base;
            base.alpha = alpha;
            base.rho = rho;
            base.sigma_zeta_sq = noise_grid.values[i];
            base.prior = prior;
            try {
                std::vector<double> failed;
                const auto states = cavity::detail::run_sweep(
                    lambda_grid.values,
                    [&](double l1) {
                        EnsembleSpec s = base;
                        s.lambda1 = l1;
                        return s;
                    },
                    /*theta_limit=*/false, failed);
                for (std::size_t k = 0; k < states.size(); ++k)
                    if (states[k]) qcurves[i][k] = states[k]->q;
                optima[i] = optimal_lambda(rho, alpha, noise_grid.values[i], prior);
                if (!failed.empty()) errors[i] = "lambda grid left points unsolved";
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    });

    std::vector<std::vector<double>> rows;
    json results = json::array(), failures = json::array();
    for (std::size_t i = 0; i < nn; ++i) {
        const double sz = noise_grid.values[i];
        if (!optima[i]) {
            failures.push_back({{"sigma_zeta_sq", sz}, {"error", errors[i]}});
            std::printf("sigma_zeta_sq=%-12.6g FAILED (%s)\n", sz, errors[i].c_str());
            continue;
        }
        const OptimalLambda& opt = *optima[i];
        json curve = json::array();
        for (std::size_t k = 0; k < lambda_grid.values.size(); ++k) {
            if (!qcurves[i][k]) continue;
            const double l = lambda_grid.values[k], q = *qcurves[i][k];
            rows.push_back({sz, l, std::log(l), q, opt.lambda_star, opt.q_min,
                            opt.monotone ? 1.0 : 0.0});
            curve.push_back({{"lambda", l}, {"q", q}});
        }
        json r;
        to_json(r, opt);
        r["sigma_zeta_sq"] = sz;
        r["curve"] = curve;
        results.push_back(r);
        if (!errors[i].empty())
            failures.push_back({{"sigma_zeta_sq", sz}, {"error", errors[i]}});
        std::printf("sigma_zeta_sq=%-12.6g lambda_star=%-12.8g q_min=%-12.8g monotone=%d\n",
                    sz, opt.lambda_star, opt.q_min, opt.monotone ? 1 : 0);
    }
    emit(out, config,
         {"sigma_zeta_sq", "lambda", "ln_lambda", "q", "lambda_star", "q_min", "monotone"},
         rows, results, failures);

    if (!out.svg.empty()) {
        double qmax = 0.0;
        for (const auto& row : rows) qmax = std::max(qmax, row[3]);
        SvgFigure fig(lambda_grid.values.front(), lambda_grid.values.back(), 0.0,
                      qmax > 0.0 ? 1.1 * qmax : 1.0, true, false,
                      "penalty/noise trade-off", "lambda", "q");
        for (std::size_t i = 0; i < nn; ++i) {
            if (!optima[i]) continue;
            std::vector<std::pair<double, double>> pts;
            for (std::size_t k = 0; k < lambda_grid.values.size(); ++k)
                if (qcurves[i][k]) pts.emplace_back(lambda_grid.values[k], *qcurves[i][k]);
            const char* color = palette[i % 6];
            fig.polyline(pts, color, 1.8);
            if (!optima[i]->monotone)
                fig.markers({{optima[i]->lambda_star, optima[i]->q_min}}, color, 4.0);
            fig.legend_entry("noise " + fmt17(noise_grid.values[i]), color);
        }
        atomic_write(resolve_output(out.svg), fig.render("config: " + config.dump()));
    }
    return failures.empty() ? 0 : 3;
}

int run_mc(const SpecFlags& sf, const std::string& alpha_grid_text, std::size_t n,
           std::size_t trials, std::uint64_t seed, double tol, std::size_t threads,
           const OutputFlags& out) {
    std::vector<double> alphas;
    if (alpha_grid_text.empty())
        alphas.push_back(sf.alpha);
    else
        alphas = GridSpec::parse(alpha_grid_text).values;

    json config = sf.echo();
    config["command"] = "mc";
    if (!alpha_grid_text.empty()) config["alpha_grid"] = alpha_grid_text;
    config["n"] = n;
    config["trials"] = trials;
    config["seed"] = seed;
    config["tol"] = tol;
    config["threads"] = threads;

    std::vector<std::optional<McEstimate>> ests(alphas.size());
    std::vector<std::string> errors(alphas.size());
    parallel_chunks(alphas.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            SpecFlags pf = sf;
            pf.alpha = alphas[i];
            try {
                ests[i] = run_trials(pf.build(), n, trials, derive_seed(seed, i), tol);
            } catch (const parameter_error&) {
                throw;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    });

    std::vector<std::vector<double>> rows;
    json results = json::array(), failures = json::array();
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!ests[i]) {
            failures.push_back({{"alpha", alphas[i]}, {"error", errors[i]}});
            std::printf("alpha=%-10.6g FAILED (%s)\n", alphas[i], errors[i].c_str());
            continue;
        }
        const McEstimate& e = *ests[i];
        rows.push_back({alphas[i], sf.rho, sf.lambda1, sf.lambda2, sf.noise,
                        static_cast<double>(n), static_cast<double>(e.trials), e.mse_mean,
                        e.mse_stderr, e.rho_hat_mean, e.kkt_max_violation});
        json r;
        to_json(r, e);
        r["alpha"] = alphas[i];
        results.push_back(r);
        std::printf("alpha=%-10.6g mse=%-13.8g stderr=%-12.6g rho_hat=%-10.6g\n", alphas[i],
                    e.mse_mean, e.mse_stderr, e.rho_hat_mean);
    }
    emit(out, config,
         {"alpha", "rho", "lambda1", "lambda2", "sigma_zeta_sq", "N", "trials", "mse",
          "stderr", "rho_hat", "kkt_max"},
         rows, results, failures);
    if (!out.json_format()) {
        auto sidecar = resolve_output(out.output);
        sidecar.replace_extension(".config.json");
        write_json(sidecar, {{"config", config}, {"version", version_string()}});
    }
    return failures.empty() ? 0 : 3;
}

int run_compare(double rho, const std::string& ratios_text, double lambda1,
                const std::string& alpha_grid_text, std::size_t n, std::size_t trials,
                std::uint64_t seed, double tol, const std::string& prior_text,
                std::size_t threads, const OutputFlags& out) {
    const GridSpec alpha_grid = GridSpec::parse(alpha_grid_text);
    const GridSpec ratio_list = GridSpec::parse(
        ratios_text.rfind("list:", 0) == 0 ? ratios_text : "list:" + ratios_text);
    const SignalPrior prior = SignalPrior::parse(prior_text);
    if (!(lambda1 > 0.0)) throw parameter_error("compare needs lambda1 > 0");
    for (double r : ratio_list.values)
        if (!(r >= 0.0)) throw parameter_error("lambda2/lambda1 ratios must be >= 0");

    json config = {{"command", "compare"}, {"rho", rho},
                   {"lambda1", lambda1},   {"lambda2_ratio", ratio_list.values},
                   {"alpha_grid", alpha_grid.text}, {"n", n},
                   {"trials", trials},     {"seed", seed},
                   {"tol", tol},           {"threads", threads}};
    to_json(config["prior"], prior);

    const std::size_t na = alpha_grid.values.size(), cells = ratio_list.values.size() * na;
    std::vector<std::optional<double>> theory(cells);
    std::vector<std::optional<McEstimate>> ests(cells);
    std::vector<std::string> errors(cells);

    std::vector<double> alpha_cs;
    for (double r : ratio_list.values)
        alpha_cs.push_back(r > 0.0 ? en_boundary(rho, r, prior).first
                                   : bp_alpha_c(rho).first);

    const auto theory_q = [&](std::size_t ratio_idx, double alpha) {
        if (alpha >= alpha_cs[ratio_idx]) return 0.0; // perfect phase
        EnsembleSpec s;
        s.alpha = alpha;
        s.rho = rho;
        const double ratio = ratio_list.values[ratio_idx];
        s.lambda1 = ratio > 0.0 ? 1.0 : 0.0;
        s.lambda2 = ratio;
        s.prior = prior;
        return solve_en_full(s, /*theta_limit=*/true).q;
    };

    parallel_chunks(cells, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t c = lo; c < hi; ++c) {
            const double ratio = ratio_list.values[c / na];
            const double alpha = alpha_grid.values[c % na];
            try {
                theory[c] = theory_q(c / na, alpha);
                EnsembleSpec s;
                s.alpha = alpha;
                s.rho = rho;
                s.lambda1 = lambda1;
                s.lambda2 = ratio * lambda1;
                s.prior = prior;
                ests[c] = run_trials(s, n, trials, derive_seed(seed, c), tol);
            } catch (const std::exception& e) {
                errors[c] = e.what();
            }
        }
    });

    std::vector<std::vector<double>> rows;
    json results = json::array(), failures = json::array();
    for (std::size_t c = 0; c < cells; ++c) {
        const double ratio = ratio_list.values[c / na];
        const double alpha = alpha_grid.values[c % na];
        if (!ests[c]) {
            failures.push_back(
                {{"ratio", ratio}, {"alpha", alpha}, {"error", errors[c]}});
            std::printf("ratio=%-6.3g alpha=%-10.6g FAILED (%s)\n", ratio, alpha,
                        errors[c].c_str());
            continue;
        }
        const McEstimate& e = *ests[c];
        rows.push_back({ratio, alpha, *theory[c], e.mse_mean, e.mse_stderr, e.rho_hat_mean,
                        e.kkt_max_violation, static_cast<double>(e.trials)});
        json r;
        to_json(r, e);
        r["ratio"] = ratio;
        r["alpha"] = alpha;
        r["q_theory"] = *theory[c];
        results.push_back(r);
        const double z = e.mse_stderr > 0.0 ? (e.mse_mean - *theory[c]) / e.mse_stderr : 0.0;
        std::printf("ratio=%-6.3g alpha=%-10.6g mse=%-13.8g theory=%-13.8g z=%+.2f\n", ratio,
                    alpha, e.mse_mean, *theory[c], z);
    }
    emit(out, config,
         {"ratio", "alpha", "q_theory", "mse", "stderr", "rho_hat", "kkt_max", "trials"},
         rows, results, failures);

    if (!out.svg.empty()) {
        double qmax = 0.0;
        for (const auto& row : rows) qmax = std::max({qmax, row[2], row[3]});
        SvgFigure fig(alpha_grid.values.front(), alpha_grid.values.back(), 0.0,
                      qmax > 0.0 ? 1.15 * qmax : 1.0, false, false,
                      "theory curves vs Monte Carlo", "alpha", "mse");
        for (std::size_t j = 0; j < ratio_list.values.size(); ++j) {
            const double ratio = ratio_list.values[j];
            const char* color = palette[j % 6];
            std::vector<std::pair<double, double>> curve;
            const std::size_t fine = 120;
            for (std::size_t k = 0; k < fine; ++k) {
                const double a = alpha_grid.values.front() +
                                 (alpha_grid.values.back() - alpha_grid.values.front()) *
                                     static_cast<double>(k) / static_cast<double>(fine - 1);
                try {
                    curve.emplace_back(a, theory_q(j, a));
                } catch (const std::exception&) {
                }
            }
            fig.polyline(curve, color, 1.8);
            std::vector<std::pair<double, double>> pts;
            std::vector<double> bars;
            for (std::size_t i = 0; i < na; ++i) {
                const std::size_t c = j * na + i;
                if (!ests[c]) continue;
                pts.emplace_back(alpha_grid.values[i], ests[c]->mse_mean);
                bars.push_back(ests[c]->mse_stderr);
            }
            fig.error_bars(pts, bars, color);
            fig.markers(pts, color);
            fig.legend_entry("lambda2/lambda1 = " + fmt17(ratio), color);
        }
        atomic_write(resolve_output(out.svg), fig.render("config: " + config.dump()));
    }
    return failures.empty() ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cavity mean-field theory of sparse reconstruction: phase boundaries,\n"
                 "mse curves, critical exponents, and Monte Carlo validation"};
    app.set_version_flag("--version", version_string());
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file (command-line flags override)");
    app.footer("Relative --output/--svg paths are prefixed by $CAVITY_OUTPUT_DIR when set.");
    app.require_subcommand(1);
    const auto hw = std::max(1u, std::thread::hardware_concurrency());

    auto* boundary = app.add_subcommand("boundary", "phase boundary curve over a tau grid");
    boundary->fallthrough();
    std::string b_grid = "log:1e-3:8:200", b_prior = "gaussian:1";
    double b_ratio = 0.0;
    boundary->add_option("--tau-grid", b_grid, "grid spec lin|log:lo:hi:n or list:...");
    boundary->add_option("--ratio", b_ratio, "lambda2/lambda1 held fixed in the limit");
    boundary->add_option("--prior", b_prior, "signal prior (enters only when ratio > 0)");
    OutputFlags b_out;
    b_out.add_to(boundary, "boundary.csv");

    auto* solve = app.add_subcommand("solve", "single cavity solve at fixed parameters");
    solve->fallthrough();
    SpecFlags s_spec;
    bool s_limit = false, s_ridge = false;
    s_spec.add_to(solve);
    solve->add_flag("--limit", s_limit, "lambda1 -> 0 limit at fixed lambda2/lambda1");
    solve->add_flag("--ridge", s_ridge, "pure-l2 (ridge) equations instead of l1/en");
    OutputFlags s_out;
    s_out.add_to(solve, "solve.json", /*with_svg=*/false);

    auto* sweep = app.add_subcommand("sweep", "cavity solves along one swept variable");
    sweep->fallthrough();
    SpecFlags w_spec;
    std::string w_var = "alpha", w_grid = "lin:0.2:0.8:25";
    bool w_limit = false, w_ridge = false;
    std::size_t w_threads = hw;
    w_spec.add_to(sweep);
    sweep->add_option("--var", w_var, "alpha | rho | lambda1 | noise");
    sweep->add_option("--grid", w_grid, "grid spec lin|log:lo:hi:n or list:...");
    sweep->add_flag("--limit", w_limit, "lambda1 -> 0 limit at fixed lambda2/lambda1");
    sweep->add_flag("--ridge", w_ridge, "sweep the ridge equations");
    sweep->add_option("--threads", w_threads, "worker pool size");
    OutputFlags w_out;
    w_out.add_to(sweep, "sweep.csv");

    auto* expo = app.add_subcommand("exponents", "critical-exponent fit for one regime");
    expo->fallthrough();
    std::string e_regime, e_penalty = "bp", e_prior;
    double e_gamma = 0.0, e_rho = 0.2, e_ratio = 0.4;
    double e_wlo = std::nan(""), e_whi = std::nan(""), e_afac = 1.0;
    expo->add_option("--regime", e_regime, "alpha | noise | lambda")->required();
    expo->add_option("--penalty", e_penalty, "bp | en");
    expo->add_option("--gamma", e_gamma, "small-signal density exponent (0 -> gaussian)");
    expo->add_option("--prior", e_prior, "explicit prior (overrides --gamma)");
    expo->add_option("--rho", e_rho, "density of nonzero signal entries");
    expo->add_option("--ratio", e_ratio, "lambda2/lambda1 for the en penalty");
    expo->add_option("--window-low", e_wlo, "fit window lower edge");
    expo->add_option("--window-high", e_whi, "fit window upper edge");
    expo->add_option("--alpha-factor", e_afac,
                     "lambda regime only: alpha = factor * alpha_c");
    OutputFlags e_out;
    e_out.add_to(expo, "exponents.json", /*with_svg=*/false);

    auto* trade = app.add_subcommand("tradeoff", "q(lambda) curves and lambda* per noise");
    trade->fallthrough();
    double t_rho = 0.2, t_afac = 1.05, t_alpha = std::nan("");
    std::string t_ngrid = "log:1e-6:1e-2:5", t_lgrid = "log:1e-7:1e-1:41",
                t_prior = "gaussian:1";
    std::size_t t_threads = hw;
    trade->add_option("--rho", t_rho, "density of nonzero signal entries");
    trade->add_option("--alpha-factor", t_afac, "alpha = factor * alpha_c(rho)");
    trade->add_option("--alpha", t_alpha, "explicit alpha (overrides --alpha-factor)");
    trade->add_option("--noise-grid", t_ngrid, "sigma_zeta^2 grid");
    trade->add_option("--lambda-grid", t_lgrid, "lambda1 grid");
    trade->add_option("--prior", t_prior, "signal prior");
    trade->add_option("--threads", t_threads, "worker pool size");
    OutputFlags t_out;
    t_out.add_to(trade, "tradeoff.csv");

    auto* mc = app.add_subcommand("mc", "Monte Carlo of the actual convex program");
    mc->fallthrough();
    SpecFlags m_spec;
    std::string m_agrid;
    std::size_t m_n = 200, m_trials = 50, m_threads = hw;
    std::uint64_t m_seed = 1;
    double m_tol = 1e-10;
    m_spec.add_to(mc);
    mc->add_option("--alpha-grid", m_agrid, "optional alpha grid (overrides --alpha)");
    mc->add_option("--n", m_n, "signal dimension N");
    mc->add_option("--trials", m_trials, "realizations per grid point");
    mc->add_option("--seed", m_seed, "master seed");
    mc->add_option("--tol", m_tol, "KKT tolerance");
    mc->add_option("--threads", m_threads, "worker pool size");
    OutputFlags m_out;
    m_out.add_to(mc, "mc.csv", /*with_svg=*/false);

    auto* cmp = app.add_subcommand("compare", "theory curves vs Monte Carlo markers");
    cmp->fallthrough();
    double c_rho = 0.15, c_lambda1 = 1e-8, c_tol = 1e-10;
    std::string c_ratios = "0,0.4,0.8", c_agrid = "lin:0.3:0.8:15", c_prior = "gaussian:1";
    std::size_t c_n = 200, c_trials = 50, c_threads = hw;
    std::uint64_t c_seed = 1;
    cmp->add_option("--rho", c_rho, "density of nonzero signal entries");
    cmp->add_option("--lambda2-ratio", c_ratios, "comma list of lambda2/lambda1 values");
    cmp->add_option("--lambda1", c_lambda1, "l1 penalty used by the Monte Carlo");
    cmp->add_option("--alpha-grid", c_agrid, "grid spec lin|log:lo:hi:n or list:...");
    cmp->add_option("--n", c_n, "signal dimension N");
    cmp->add_option("--trials", c_trials, "realizations per grid point");
    cmp->add_option("--seed", c_seed, "master seed");
    cmp->add_option("--tol", c_tol, "KKT tolerance");
    cmp->add_option("--prior", c_prior, "signal prior");
    cmp->add_option("--threads", c_threads, "worker pool size");
    OutputFlags c_out;
    c_out.add_to(cmp, "compare.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }

    try {
        if (boundary->parsed()) return run_boundary(b_grid, b_ratio, b_prior, b_out);
        if (solve->parsed()) return run_solve(s_spec, s_limit, s_ridge, s_out);
        if (sweep->parsed())
            return run_sweep(w_spec, w_var, w_grid, w_limit, w_ridge, w_threads, w_out);
        if (expo->parsed())
            return run_exponents(e_regime, e_penalty, e_gamma, e_prior, e_rho, e_ratio, e_wlo,
                                 e_whi, e_afac, e_out);
        if (trade->parsed())
            return run_tradeoff(t_rho, t_afac, t_alpha, t_ngrid, t_lgrid, t_prior, t_threads,
                                t_out);
        if (mc->parsed())
            return run_mc(m_spec, m_agrid, m_n, m_trials, m_seed, m_tol, m_threads, m_out);
        if (cmp->parsed())
            return run_compare(c_rho, c_ratios, c_lambda1, c_agrid, c_n, c_trials, c_seed,
                               c_tol, c_prior, c_threads, c_out);
    } catch (const parameter_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const phase_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 3;
    }
    return 0;
}
