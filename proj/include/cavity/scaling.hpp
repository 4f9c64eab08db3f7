#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "cavity/cavity_solver.hpp"
#include "cavity/errors.hpp"
#include "cavity/phase_boundary.hpp"
#include "cavity/priors.hpp"

namespace cavity {

enum class Penalty { bp, en };

// Result of a least-squares fit of a scaling law. For power laws `exponent` is the
// log-log slope and `prefactor` the back-transformed intercept; for the gapped-prior
// logarithmic laws (1/q against ln(1/x)) `exponent` is the line's slope and
// `prefactor` its intercept.
struct ScalingFit {
    double exponent = 0.0;
    double prefactor = 0.0;
    double r_squared = 0.0;
    double exponent_stderr = 0.0;
    double window_low = 0.0;
    double window_high = 0.0;
    std::size_t points_used = 0;
};

namespace detail {

struct LineFit {
    double slope, intercept, r_squared, slope_stderr;
};

inline LineFit least_squares_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw parameter_error("degenerate abscissa in least-squares fit");
    const double slope = sxy / sxx;
    const double r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
    const double rss = std::max(syy - slope * sxy, 0.0);
    const double se = n > 2 ? std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx) : 0.0;
    return {slope, my - slope * mx, r2, se};
}

inline void check_fit_sizes(const std::vector<double>& xs, const std::vector<double>& ys,
                            const char* who) {
    if (xs.size() != ys.size())
        throw parameter_error(std::string(who) + " needs equal-length inputs");
    if (xs.size() < 4) throw parameter_error(std::string(who) + " needs at least 4 points");
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(n - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

// Continuation sweep over an ascending grid, traversed from the large end (farthest
// from the critical point, hence the tamest solve) with each solution warm-starting
// its neighbour. Failed points are recorded rather than fatal so the caller can
// report all of them at once.
inline std::vector<std::optional<CavityState>> run_sweep(
    const std::vector<double>& grid, const std::function<EnsembleSpec(double)>& make_spec,
    bool theta_limit, std::vector<double>& failed) {
    std::vector<std::optional<CavityState>> out(grid.size());
    std::optional<std::array<double, 2>> init;
    for (std::size_t k = grid.size(); k-- > 0;) {
        try {
            CavityState st = solve_en_full(make_spec(grid[k]), theta_limit, init);
            init = std::array<double, 2>{st.tau, std::sqrt(st.sigma_xi_sq)};
            out[k] = st;
        } catch (const parameter_error&) {
            throw;
        } catch (const std::exception&) {
            failed.push_back(grid[k]);
        }
    }
    std::sort(failed.begin(), failed.end());
    return out;
}

inline double critical_alpha(Penalty penalty, double rho, double lambda_ratio,
                             const SignalPrior& prior) {
    return (penalty == Penalty::bp ? bp_alpha_c(rho) : en_boundary(rho, lambda_ratio, prior))
        .first;
}

} // namespace detail

inline ScalingFit fit_linear(const std::vector<double>& xs, const std::vector<double>& ys) {
    detail::check_fit_sizes(xs, ys, "fit_linear");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw parameter_error("fit_linear requires finite data");
    const auto lf = detail::least_squares_line(xs, ys);
    return {lf.slope,
            lf.intercept,
            lf.r_squared,
            lf.slope_stderr,
            *std::min_element(xs.begin(), xs.end()),
            *std::max_element(xs.begin(), xs.end()),
            xs.size()};
}

inline ScalingFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys) {
    detail::check_fit_sizes(xs, ys, "fit_power_law");
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw parameter_error("fit_power_law requires positive finite data");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    const auto lf = detail::least_squares_line(lx, ly);
    return {lf.slope,
            std::exp(lf.intercept),
            lf.r_squared,
            lf.slope_stderr,
            *std::min_element(xs.begin(), xs.end()),
            *std::max_element(xs.begin(), xs.end()),
            xs.size()};
}

namespace detail {

// Shared tail of the three exponent sweeps: restrict to the fit window, then fit
// either the power law or, for gapped priors, the 1/y-vs-ln(1/x) line.
inline ScalingFit fit_window(const std::vector<double>& grid,
                             const std::vector<std::optional<CavityState>>& states,
                             const std::function<double(const CavityState&)>& observable,
                             const std::function<double(double)>& abscissa, bool log_law,
                             double window_low, double window_high) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < window_low * (1.0 - 1e-9) || grid[i] > window_high * (1.0 + 1e-9)) continue;
        xs.push_back(abscissa(grid[i]));
        ys.push_back(observable(*states[i]));
    }
    ScalingFit fit;
    if (log_law) {
        std::vector<double> lx(xs.size()), iy(ys.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            lx[i] = std::log(1.0 / xs[i]);
            iy[i] = 1.0 / ys[i];
        }
        fit = fit_linear(lx, iy);
    } else {
        fit = fit_power_law(xs, ys);
    }
    fit.window_low = window_low;
    fit.window_high = window_high;
    return fit;
}

} // namespace detail

// MSE growth approaching the boundary from below: sweeps alpha = alpha_c (1 - d) for
// relative distances d in [1e-4, 1e-1] at theta -> 0, sigma_zeta^2 = 0, and fits
// q against (alpha_c - alpha) inside [window_low, window_high] (relative units).
// Gapped priors get the 1/q vs ln(1/(alpha_c - alpha)) line instead.
inline ScalingFit exponent_alpha_approach(Penalty penalty, double rho, const SignalPrior& prior,
                                          double lambda_ratio = 0.4, double window_low = 1e-4,
                                          double window_high = 1e-2) {
    if (!(rho > 0.0 && rho < 1.0))
        throw parameter_error("exponent_alpha_approach requires 0 < rho < 1");
    if (!(window_low > 0.0 && window_low < window_high))
        throw parameter_error("fit window must satisfy 0 < low < high");
    const double r = penalty == Penalty::bp ? 0.0 : lambda_ratio;
    const double alpha_c = detail::critical_alpha(penalty, rho, r, prior);

    const auto deltas = detail::logspace(1e-4, 1e-1, 16);
    EnsembleSpec base;
    base.rho = rho;
    base.lambda1 = 0.0;
    base.lambda2 = 0.0;
    base.sigma_zeta_sq = 0.0;
    base.prior = prior;
    std::vector<double> failed;
    const auto states = detail::run_sweep(
        deltas,
        [&](double d) {
            EnsembleSpec s = base;
            s.alpha = alpha_c * (1.0 - d);
            if (r > 0.0) {
                s.lambda1 = 1.0;
                s.lambda2 = r;
            }
            return s;
        },
        /*theta_limit=*/true, failed);
    if (!failed.empty()) {
        for (double& d : failed) d = alpha_c * (1.0 - d);
        throw partial_result_error("alpha-approach sweep left grid points unsolved", failed);
    }
    return detail::fit_window(
        deltas, states, [](const CavityState& st) { return st.q; },
        [&](double d) { return alpha_c * d; }, prior.kind() == SignalPrior::Kind::gapped,
        window_low, window_high);
}

// Noise response on the boundary: alpha = alpha_c(rho) exactly, theta -> 0, and
// sigma_zeta^2 swept over [1e-7, 1e-3]; fits sigma_xi^2 against sigma_zeta^2 inside
// the window. Gapped priors get the 1/q vs ln(1/sigma_zeta^2) line.
inline ScalingFit exponent_noise(Penalty penalty, double rho, const SignalPrior& prior,
                                 double lambda_ratio = 0.4, double window_low = 1e-6,
                                 double window_high = 1e-3) {
    if (!(rho > 0.0 && rho < 1.0)) throw parameter_error("exponent_noise requires 0 < rho < 1");
    if (!(window_low > 0.0 && window_low < window_high))
        throw parameter_error("fit window must satisfy 0 < low < high");
    const double r = penalty == Penalty::bp ? 0.0 : lambda_ratio;
    const double alpha_c = detail::critical_alpha(penalty, rho, r, prior);

    const auto noises = detail::logspace(1e-7, 1e-3, 17);
    EnsembleSpec base;
    base.alpha = alpha_c;
    base.rho = rho;
    base.lambda1 = r > 0.0 ? 1.0 : 0.0;
    base.lambda2 = r;
    base.prior = prior;
    std::vector<double> failed;
    const auto states = detail::run_sweep(
        noises,
        [&](double sz) {
            EnsembleSpec s = base;
            s.sigma_zeta_sq = sz;
            return s;
        },
        /*theta_limit=*/true, failed);
    if (!failed.empty())
        throw partial_result_error("noise sweep left grid points unsolved", failed);
    return detail::fit_window(
        noises, states, [](const CavityState& st) { return st.sigma_xi_sq; },
        [](double sz) { return sz; }, prior.kind() == SignalPrior::Kind::gapped, window_low,
        window_high);
}

// Penalty scaling on the boundary: alpha = alpha_c(rho) (or alpha_override, used to
// expose the crossover drift of the slope toward 2 slightly above the boundary),
// sigma_zeta^2 = 0, lambda_1 swept over the window with lambda_2 = ratio * lambda_1;
// fits sigma_xi^2 against vartheta = lambda_1 sigma^2.
inline ScalingFit exponent_lambda(Penalty penalty, double rho, const SignalPrior& prior,
                                  double lambda_ratio = 0.4, double window_low = 1e-6,
                                  double window_high = 1e-3,
                                  std::optional<double> alpha_override = std::nullopt) {
    if (!(rho > 0.0 && rho < 1.0)) throw parameter_error("exponent_lambda requires 0 < rho < 1");
    if (!(window_low > 0.0 && window_low < window_high))
        throw parameter_error("fit window must satisfy 0 < low < high");
    const double r = penalty == Penalty::bp ? 0.0 : lambda_ratio;
    const double alpha_c = detail::critical_alpha(penalty, rho, r, prior);
    const double alpha = alpha_override.value_or(alpha_c);

    const double decades = std::log10(window_high / window_low);
    const std::size_t n = std::max<std::size_t>(8, static_cast<std::size_t>(4.0 * decades) + 1);
    const auto lambdas = detail::logspace(window_low, window_high, n);
    EnsembleSpec base;
    base.alpha = alpha;
    base.rho = rho;
    base.sigma_zeta_sq = 0.0;
    base.prior = prior;
    std::vector<double> failed;
    const auto states = detail::run_sweep(
        lambdas,
        [&](double l1) {
            EnsembleSpec s = base;
            s.lambda1 = l1;
            s.lambda2 = r * l1;
            return s;
        },
        /*theta_limit=*/false, failed);
    if (!failed.empty())
        throw partial_result_error("lambda sweep left grid points unsolved", failed);
    return detail::fit_window(
        lambdas, states, [](const CavityState& st) { return st.sigma_xi_sq; },
        [&](double l1) { return l1 * base.sigma_sq; },
        prior.kind() == SignalPrior::Kind::gapped, window_low, window_high);
}

struct OptimalLambda {
    double lambda_star;
    double q_min;
    bool monotone; // q(lambda) never dips below the lambda -> 0 limit
};

// Minimizes q(lambda) for basis pursuit at fixed noise. The lambda -> 0 limit is the
// baseline; if no grid point dips below it the objective is declared monotone and
// lambda* = 0 is returned, otherwise the interior minimum is refined by golden
// section in ln(lambda).
inline OptimalLambda optimal_lambda(double rho, double alpha, double sigma_zeta_sq,
                                    const SignalPrior& prior) {
    if (!(sigma_zeta_sq > 0.0)) throw parameter_error("optimal_lambda requires sigma_zeta_sq > 0");
    EnsembleSpec base;
    base.alpha = alpha;
    base.rho = rho;
    base.lambda1 = 0.0;
    base.lambda2 = 0.0;
    base.sigma_zeta_sq = sigma_zeta_sq;
    base.prior = prior;

    const CavityState limit = solve_bp_full(base, /*theta_limit=*/true);
    const double q0 = limit.q;

    std::optional<std::array<double, 2>> ws{{limit.tau, std::sqrt(limit.sigma_xi_sq)}};
    const auto q_at = [&](double l1) {
        EnsembleSpec s = base;
        s.lambda1 = l1;
        const CavityState st = solve_bp_full(s, /*theta_limit=*/false, ws);
        ws = std::array<double, 2>{st.tau, std::sqrt(st.sigma_xi_sq)};
        return st.q;
    };

    auto grid = detail::logspace(1e-7, 1e-1, 25);
    std::vector<double> qs;
    std::vector<double> failed;
    for (double l1 : grid) {
        try {
            qs.push_back(q_at(l1));
        } catch (const std::exception&) {
            failed.push_back(l1);
        }
    }
    if (!failed.empty())
        throw partial_result_error("lambda grid left points unsolved", failed);

    const double qmin_grid = *std::min_element(qs.begin(), qs.end());
    const double qmax_grid = *std::max_element(qs.begin(), qs.end());
    if (qmax_grid - qmin_grid <= 1e-12 * qmax_grid || qmin_grid >= q0 * (1.0 - 1e-10))
        return {0.0, q0, true};

    std::size_t im = static_cast<std::size_t>(
        std::min_element(qs.begin(), qs.end()) - qs.begin());
    while (im == 0 && grid.front() > 1e-12) {
        const double lower = grid.front() * 0.1;
        grid.insert(grid.begin(), lower);
        qs.insert(qs.begin(), q_at(lower));
        im = static_cast<std::size_t>(std::min_element(qs.begin(), qs.end()) - qs.begin());
    }
    while (im + 1 == grid.size() && grid.back() < 1e3) {
        const double upper = grid.back() * 10.0;
        grid.push_back(upper);
        qs.push_back(q_at(upper));
        im = static_cast<std::size_t>(std::min_element(qs.begin(), qs.end()) - qs.begin());
    }

    double lo = std::log(grid[im > 0 ? im - 1 : im]);
    double hi = std::log(grid[std::min(im + 1, grid.size() - 1)]);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double t1 = hi - gr * (hi - lo), t2 = lo + gr * (hi - lo);
    double f1 = q_at(std::exp(t1)), f2 = q_at(std::exp(t2));
    for (int it = 0; it < 70 && hi - lo > 1e-10; ++it) {
        if (f1 <= f2) {
            hi = t2;
            t2 = t1;
            f2 = f1;
            t1 = hi - gr * (hi - lo);
            f1 = q_at(std::exp(t1));
        } else {
            lo = t1;
            t1 = t2;
            f1 = f2;
            t2 = lo + gr * (hi - lo);
            f2 = q_at(std::exp(t2));
        }
    }
    const double lstar = std::exp(0.5 * (lo + hi));
    return {lstar, std::min(f1, f2), false};
}

} // namespace cavity
