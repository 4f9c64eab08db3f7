// Acceptance gate: twelve criteria, one PASS/FAIL line each, pinned tolerances.
// Exits nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cavity/io.hpp"
#include "cavity/montecarlo.hpp"

using namespace cavity;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double invert_bp_rho_c(double alpha) {
    double lo = 1e-12, hi = 0.999;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (bp_alpha_c(mid).first < alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// 1. Boundary endpoint: the tau -> 0 corner of the parametric curve is (1, 1).
Outcome criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const BoundaryPoint pt = bp_boundary_parametric(1e-11);
        worst = std::max({worst, std::fabs(pt.alpha_c - 1.0), std::fabs(pt.rho_c - 1.0)});
    }
    const double per_call =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() /
        1000.0;
    const bool pass = worst <= 1e-10 && per_call < 1.0;
    return {pass, fmt("max |(alpha,rho) - 1| = %.2e (tol 1e-10), %.4f ms/call (budget 1 ms)",
                      worst, per_call)};
}

// 2. Sparse-limit asymptote within 15% at alpha in {1e-3, 1e-4}, improving downward.
Outcome criterion2() {
    const double d3 = std::fabs(invert_bp_rho_c(1e-3) / bp_sparse_asymptote(1e-3) - 1.0);
    const double d4 = std::fabs(invert_bp_rho_c(1e-4) / bp_sparse_asymptote(1e-4) - 1.0);
    const bool within = d3 <= 0.15 && d4 <= 0.15;
    const bool improves = d4 < d3;
    return {within && improves,
            fmt("deviation %.2f%% at 1e-3, %.2f%% at 1e-4 (tol 15%%); improves: %s", 100.0 * d3,
                100.0 * d4, improves ? "yes" : "no")};
}

// 3. Scalar-oracle equivalence: zero-signal and nonzero-signal MSE pieces vs a
// 1e7-sample Monte Carlo of the soft-threshold channel at 10 random triples.
Outcome criterion3() {
    const SignalPrior prior = SignalPrior::parse("gaussian:1");
    RngStream pick(20260815);
    double worst_z = 0.0;
    int checked = 0;
    for (int k = 0; k < 10; ++k) {
        const double theta = 0.05 + 1.95 * pick.uniform01();
        const double sxi = 0.2 + 1.3 * pick.uniform01();
        const double rho = 0.05 + 0.45 * pick.uniform01();
        const double tau = theta / sxi;

        const double zero_exact = sxi * sxi * h2(tau);
        const double nonzero_exact =
            sxi * sxi *
            average(prior, sxi, [&](double t0) { return channel_mse_nonzero(t0, tau, 1.0); });

        RngStream rs(derive_seed(987, static_cast<std::uint64_t>(k)));
        const Threshold th(theta);
        double s0 = 0.0, s0sq = 0.0, s1 = 0.0, s1sq = 0.0;
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < 10'000'000; ++i) {
            const double x0 = rs.uniform01() < rho ? rs.normal() : 0.0;
            const double d = soft_threshold(x0 + sxi * rs.normal(), th) - x0;
            const double e = d * d;
            if (x0 == 0.0) {
                s0 += e;
                s0sq += e * e;
                ++n0;
            } else {
                s1 += e;
                s1sq += e * e;
                ++n1;
            }
        }
        const auto z = [](double sum, double sumsq, std::size_t n, double exact) {
            const double cnt = static_cast<double>(n);
            const double mean = sum / cnt;
            const double se = std::sqrt((sumsq / cnt - mean * mean) / (cnt - 1.0));
            return std::fabs(mean - exact) / se;
        };
        worst_z = std::max({worst_z, z(s0, s0sq, n0, zero_exact), z(s1, s1sq, n1, nonzero_exact)});
        checked += 2;
    }
    return {worst_z <= 3.0,
            fmt("%d piece checks, worst |z| = %.2f (tol 3 se)", checked, worst_z)};
}

// 4. Universality-class split of the lambda exponent at alpha_c(0.2), gamma = 0.
Outcome criterion4() {
    const SignalPrior prior = SignalPrior::parse("gaussian:1");
    const double bp = exponent_lambda(Penalty::bp, 0.2, prior).exponent;
    const double en = exponent_lambda(Penalty::en, 0.2, prior, 0.4).exponent;
    const bool pass = std::fabs(bp - 4.0 / 3.0) <= 0.05 && std::fabs(en - 1.0) <= 0.05;
    return {pass, fmt("bp %.4f (target 4/3 +- 0.05), en %.4f (target 1.00 +- 0.05)", bp, en)};
}

// 5. Approach exponent 2/(1+gamma) for gamma in {0, 1}, both penalties.
Outcome criterion5() {
    std::string detail;
    bool pass = true;
    for (double gamma : {0.0, 1.0}) {
        const SignalPrior prior = gamma == 0.0
                                      ? SignalPrior::parse("gaussian:1")
                                      : SignalPrior::parse("power_law:" + fmt17(gamma) + ":1");
        const double target = 2.0 / (1.0 + gamma);
        const double bp = exponent_alpha_approach(Penalty::bp, 0.2, prior).exponent;
        const double en = exponent_alpha_approach(Penalty::en, 0.2, prior, 0.4).exponent;
        pass = pass && std::fabs(bp - target) <= 0.05 && std::fabs(en - target) <= 0.05;
        detail += fmt("gamma %.0f: bp %.4f en %.4f (target %.2f +- 0.05); ", gamma, bp, en, target);
    }
    return {pass, detail};
}

// 6. Noise exponent 2/(3+gamma) on the boundary for gamma in {0, 1}.
Outcome criterion6() {
    std::string detail;
    bool pass = true;
    for (double gamma : {0.0, 1.0}) {
        const SignalPrior prior = gamma == 0.0
                                      ? SignalPrior::parse("gaussian:1")
                                      : SignalPrior::parse("power_law:" + fmt17(gamma) + ":1");
        const double target = 2.0 / (3.0 + gamma);
        const double got = exponent_noise(Penalty::bp, 0.2, prior).exponent;
        pass = pass && std::fabs(got - target) <= 0.05;
        detail += fmt("gamma %.0f: %.4f (target %.4f +- 0.05); ", gamma, got, target);
    }
    return {pass, detail};
}

// 7. Gapped prior: 1/MSE is linear in the log of each control parameter.
Outcome criterion7() {
    const SignalPrior gapped = SignalPrior::parse("gapped:0.5:1");
    const double r2_alpha = exponent_alpha_approach(Penalty::bp, 0.2, gapped).r_squared;
    const double r2_lambda = exponent_lambda(Penalty::bp, 0.2, gapped).r_squared;
    const double r2_noise = exponent_noise(Penalty::bp, 0.2, gapped).r_squared;
    const bool pass = r2_alpha > 0.99 && r2_lambda > 0.99 && r2_noise > 0.99;
    return {pass, fmt("r^2 alpha %.6f, lambda %.6f, noise %.6f (floor 0.99)", r2_alpha, r2_lambda,
                      r2_noise)};
}

// 8. Trade-off optimum: lambda* ~ sigma_zeta^(4/3) slope 2/3 above the boundary;
// on the boundary the lambda response must certify monotone.
Outcome criterion8() {
    const SignalPrior prior = SignalPrior::parse("gaussian:1");
    const double alpha_c = bp_alpha_c(0.2).first;
    const auto noises = detail::logspace(1e-6, 1e-2, 9);
    std::vector<double> stars;
    bool all_positive = true;
    for (double nz : noises) {
        const OptimalLambda opt = optimal_lambda(0.2, 1.05 * alpha_c, nz, prior);
        all_positive = all_positive && opt.lambda_star > 0.0;
        stars.push_back(opt.lambda_star);
    }
    double slope = std::numeric_limits<double>::quiet_NaN();
    if (all_positive) slope = fit_power_law(noises, stars).exponent;

    int monotone_count = 0;
    const auto probe = detail::logspace(1e-6, 1e-2, 5);
    for (double nz : probe)
        if (optimal_lambda(0.2, alpha_c, nz, prior).monotone) ++monotone_count;

    const bool pass = all_positive && std::fabs(slope - 2.0 / 3.0) <= 0.05 &&
                      monotone_count == static_cast<int>(probe.size());
    return {pass, fmt("slope %.4f (target 2/3 +- 0.05); monotone at alpha_c: %d/%d noise levels",
                      slope, monotone_count, static_cast<int>(probe.size()))};
}

// 9. Ridge projector statistics at N=2000 over 200 fresh measurement matrices and a
// fixed signal rescaled to |x0|^2 = rho m2 N, so the Appendix-A moments are exact.
Outcome criterion9() {
    const std::size_t n = 2000, trials = 200;
    const double alpha = 0.5, rho = 0.2, m2 = 1.0;
    EnsembleSpec spec;
    spec.alpha = alpha;
    spec.rho = rho;
    spec.lambda1 = 0.0;
    spec.lambda2 = 0.0;

    std::vector<double> x0 = sample(spec.prior, rho, n, 31415);
    Eigen::VectorXd x0v = Eigen::Map<Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(n));
    x0v *= std::sqrt(rho * m2 * static_cast<double>(n) / x0v.squaredNorm());

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(x0v.size());
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(x0v.size());
    std::vector<Eigen::VectorXd> xhats;
    xhats.reserve(trials);
    std::vector<double> mses;
    for (std::size_t t = 0; t < trials; ++t) {
        Instance inst = generate_instance(spec, n, derive_seed(27182, t));
        inst.x0 = x0v;
        inst.y = inst.h * x0v;
        xhats.push_back(solve_ridge_direct(inst, 0.0));
        const Eigen::VectorXd& xhat = xhats.back();
        sum += xhat;
        sumsq += xhat.cwiseProduct(xhat);
        mses.push_back((xhat - x0v).squaredNorm() / static_cast<double>(n));
    }
    const auto mean_se = [](const std::vector<double>& v) {
        const double cnt = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / cnt;
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        return std::pair{mean, std::sqrt(var / (cnt - 1.0) / cnt)};
    };

    const auto [mse, mse_se] = mean_se(mses);
    const double q_exact = (1.0 - alpha) * rho * m2;
    const double z_mse = std::fabs(mse - q_exact) / mse_se;

    const double tcnt = static_cast<double>(trials);
    std::size_t mean_hits = 0;
    for (Eigen::Index i = 0; i < x0v.size(); ++i) {
        const double mi = sum[i] / tcnt;
        const double sd = std::sqrt((sumsq[i] - tcnt * mi * mi) / (tcnt - 1.0));
        if (std::fabs(mi - alpha * x0v[i]) <= 3.0 * sd / std::sqrt(tcnt)) ++mean_hits;
    }
    const double mean_frac = static_cast<double>(mean_hits) / static_cast<double>(n);

    // pooled per-coordinate sample variance; sum_i V_i = sum_t |xhat_t - mean|^2
    // exactly, so the per-trial terms U_t give a sound stderr (the coordinates
    // are coupled by the projector and must not be counted as independent)
    const Eigen::VectorXd xbar = sum / tcnt;
    std::vector<double> us;
    us.reserve(trials);
    for (const Eigen::VectorXd& xhat : xhats)
        us.push_back((xhat - xbar).squaredNorm() / static_cast<double>(n));
    const auto [u, u_se] = mean_se(us);
    const double w = u * tcnt / (tcnt - 1.0);
    const double w_se = u_se * tcnt / (tcnt - 1.0);
    const double var_exact = (1.0 - alpha) * alpha * rho * m2;
    const double z_var = std::fabs(w - var_exact) / w_se;

    const bool pass = z_mse <= 3.0 && mean_frac >= 0.985 && z_var <= 3.0;
    return {pass,
            fmt("mse %.5f vs %.5f (|z| %.2f); coordinate means within 3 se: %.1f%% (floor "
                "98.5%%); pooled var %.5f vs %.5f (|z| %.2f)",
                mse, q_exact, z_mse, 100.0 * mean_frac, w, var_exact, z_var)};
}

// 10. Fig. 5 reproduction at desk scale: 3 ratios x 15 alphas, 50 trials each at
// N=200, K=30; markers within 3 se (plus the lambda1 = 1e-8 bias floor) of theory.
Outcome criterion10() {
    const double rho = 0.15, lambda1 = 1e-8, tol = 1e-10;
    const std::size_t n = 200, trials = 50;
    const std::uint64_t master = 1;
    const SignalPrior prior = SignalPrior::parse("gaussian:1");
    const std::vector<double> ratios{0.0, 0.4, 0.8};
    const std::vector<double> alphas{0.300, 0.325, 0.350, 0.375, 0.400, 0.455, 0.473, 0.491,
                                     0.548, 0.572, 0.630, 0.665, 0.700, 0.740, 0.780};

    std::vector<double> alpha_cs;
    for (double r : ratios)
        alpha_cs.push_back(r > 0.0 ? en_boundary(rho, r, prior).first : bp_alpha_c(rho).first);

    std::size_t misses = 0;
    std::vector<double> transition(ratios.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < ratios.size() * alphas.size(); ++c) {
        const std::size_t ri = c / alphas.size();
        const double ratio = ratios[ri];
        const double alpha = alphas[c % alphas.size()];

        double q = 0.0;
        if (alpha < alpha_cs[ri]) {
            EnsembleSpec ts;
            ts.alpha = alpha;
            ts.rho = rho;
            ts.lambda1 = ratio > 0.0 ? 1.0 : 0.0;
            ts.lambda2 = ratio;
            q = solve_en_full(ts, /*theta_limit=*/true).q;
        }

        EnsembleSpec ms;
        ms.alpha = alpha;
        ms.rho = rho;
        ms.lambda1 = lambda1;
        ms.lambda2 = ratio * lambda1;
        const McEstimate est = run_trials(ms, n, trials, derive_seed(master, c), tol);
        if (std::fabs(est.mse_mean - q) > 3.0 * est.mse_stderr + 1e-10) ++misses;
        if (std::isnan(transition[ri]) && est.mse_mean < 1e-6) transition[ri] = alpha;
    }
    const std::size_t cells = ratios.size() * alphas.size();
    const bool coverage = cells - misses >= (cells * 9 + 9) / 10;
    const bool shifts = transition[0] < transition[1] && transition[1] < transition[2];
    return {coverage && shifts,
            fmt("%zu/%zu cells within 3 se + 1e-10 (need >= 41); transitions %.3f < %.3f < %.3f: "
                "%s",
                cells - misses, cells, transition[0], transition[1], transition[2],
                shifts ? "yes" : "no")};
}

double en_objective(const Instance& inst, const Eigen::VectorXd& x, double l1, double l2) {
    return 0.5 * (inst.y - inst.h * x).squaredNorm() + l1 * x.lpNorm<1>() +
           0.5 * l2 * x.squaredNorm();
}

// FISTA on the same objective; converges in objective value, which is all the
// comparison needs.
Eigen::VectorXd fista(const Instance& inst, double l1, double l2) {
    const Eigen::MatrixXd& h = inst.h;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(h.cols()).normalized();
    for (int it = 0; it < 60; ++it) v = (h.transpose() * (h * v)).normalized();
    const double lip = 1.02 * (h * v).squaredNorm() + l2;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(h.cols()), z = x, best = x;
    double tk = 1.0, f_best = en_objective(inst, x, l1, l2), f_mark = f_best;
    const Threshold th(l1 / lip);
    for (int it = 1; it <= 50'000; ++it) {
        const Eigen::VectorXd grad = h.transpose() * (h * z - inst.y) + l2 * z;
        Eigen::VectorXd xn = z - grad / lip;
        for (Eigen::Index i = 0; i < xn.size(); ++i) xn[i] = soft_threshold(xn[i], th);
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        z = xn + ((tk - 1.0) / tn) * (xn - x);
        x = xn;
        tk = tn;
        const double f = en_objective(inst, x, l1, l2);
        if (f < f_best) {
            f_best = f;
            best = x;
        }
        if (it % 200 == 0) {
            if (f_mark - f_best <= 1e-13 * std::max(1.0, std::fabs(f_best))) break;
            f_mark = f_best;
        }
    }
    return best;
}

// 11. KKT certification on 100 random small instances plus a subgradient oracle.
Outcome criterion11() {
    RngStream rs(7);
    double kkt_worst = 0.0, obj_worst = 0.0;
    for (int inst_id = 0; inst_id < 100; ++inst_id) {
        const auto m = static_cast<Eigen::Index>(3 + rs.uniform01() * 38.0);
        const auto n = static_cast<Eigen::Index>(5 + rs.uniform01() * 36.0);
        const double rho = 0.1 + 0.5 * rs.uniform01();
        const double l1 = 0.02 + 0.45 * rs.uniform01();
        const double l2 = rs.uniform01() < 0.3 ? 0.0 : 0.4 * rs.uniform01();
        const double noise_sd = rs.uniform01() < 0.5 ? 0.0 : 0.3 * rs.uniform01();

        Instance inst;
        inst.h.resize(m, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < m; ++i)
                inst.h(i, j) = rs.normal() / std::sqrt(static_cast<double>(m));
        inst.x0 = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (rs.uniform01() < rho) inst.x0[i] = rs.normal();
        inst.y = inst.h * inst.x0;
        for (Eigen::Index i = 0; i < m; ++i) inst.y[i] += noise_sd * rs.normal();
        inst.zeta_sigma_sq = noise_sd * noise_sd;

        const Eigen::VectorXd xhat = solve_elastic_net(inst, l1, l2, 1e-10);
        kkt_worst = std::max(kkt_worst, detail::en_kkt_violation(inst, xhat, l1, l2));
        const Eigen::VectorXd oracle = fista(inst, l1, l2);
        obj_worst = std::max(obj_worst, std::fabs(en_objective(inst, xhat, l1, l2) -
                                                  en_objective(inst, oracle, l1, l2)));
    }
    const bool pass = kkt_worst <= 1e-8 && obj_worst <= 1e-6;
    return {pass, fmt("worst kkt violation %.2e (tol 1e-8); worst objective gap %.2e (tol 1e-6)",
                      kkt_worst, obj_worst)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 12. Determinism: identical seeds give identical estimates and byte-identical files.
Outcome criterion12() {
    EnsembleSpec spec;
    spec.alpha = 0.36;
    spec.rho = 0.15;
    spec.lambda1 = 0.02;
    spec.lambda2 = 0.01;
    const McEstimate a = run_trials(spec, 80, 5, 4242);
    const McEstimate b = run_trials(spec, 80, 5, 4242);
    const bool est_equal = a.mse_mean == b.mse_mean && a.mse_stderr == b.mse_stderr &&
                           a.rho_hat_mean == b.rho_hat_mean &&
                           a.kkt_max_violation == b.kkt_max_violation;

    const auto dir = std::filesystem::temp_directory_path() / "cavity_acceptance";
    std::filesystem::create_directories(dir);
    const std::vector<std::string> header{"tau", "alpha_c", "rho_c"};
    std::vector<std::vector<double>> rows;
    for (double tau : {0.5, 1.0, 2.0}) {
        const BoundaryPoint pt = boundary_parametric(tau);
        rows.push_back({tau, pt.alpha_c, pt.rho_c});
    }
    write_csv(dir / "a.csv", {version_string()}, header, rows);
    write_csv(dir / "b.csv", {version_string()}, header, rows);
    const bool csv_equal = slurp(dir / "a.csv") == slurp(dir / "b.csv");

    json doc = result_document(json{{"seed", 4242}}, json{{"mse", a.mse_mean}});
    write_json(dir / "a.json", doc);
    write_json(dir / "b.json", doc);
    const bool json_equal = slurp(dir / "a.json") == slurp(dir / "b.json");
    std::filesystem::remove_all(dir);

    const bool pass = est_equal && csv_equal && json_equal;
    return {pass, fmt("estimates %s, csv bytes %s, json bytes %s", est_equal ? "equal" : "DIFFER",
                      csv_equal ? "equal" : "DIFFER", json_equal ? "equal" : "DIFFER")};
}

} // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        Outcome (*fn)();
        double budget_sec;
    };
    const std::vector<Entry> entries{
        {1, "boundary endpoint", criterion1, 5.0},
        {2, "sparse-limit asymptote", criterion2, 1.0},
        {3, "scalar-channel oracle", criterion3, 30.0},
        {4, "lambda exponent split", criterion4, 120.0},
        {5, "approach exponent", criterion5, 120.0},
        {6, "noise exponent", criterion6, 120.0},
        {7, "gapped-prior log laws", criterion7, 180.0},
        {8, "trade-off optimum", criterion8, 180.0},
        {9, "ridge projector statistics", criterion9, 120.0},
        {10, "desk-scale phase diagram", criterion10, 600.0},
        {11, "kkt certification", criterion11, 60.0},
        {12, "determinism", criterion12, 30.0},
    };
    int failed = 0;
    for (const Entry& e : entries) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o = {false, fmt("exception: %s", ex.what())};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (sec > e.budget_sec) {
            o.pass = false;
            o.detail += fmt(" [over budget %.0f s]", e.budget_sec);
        }
        if (!o.pass) ++failed;
        std::printf("%s %2d %-28s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", e.id, e.name,
                    o.detail.c_str(), sec);
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/12 criteria passed\n", 12 - failed);
    return failed == 0 ? 0 : 1;
}
