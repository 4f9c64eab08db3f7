#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "cavity/errors.hpp"
#include "cavity/phase_boundary.hpp"
#include "cavity/priors.hpp"
#include "cavity/scalar_math.hpp"

namespace cavity {

struct EnsembleSpec {
    double alpha = 0.5;
    double rho = 0.1;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double sigma_sq = 1.0;      // sets vartheta = lambda1 * sigma_sq
    double sigma_zeta_sq = 0.0;
    SignalPrior prior = SignalPrior::gaussian(1.0);

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw parameter_error("alpha must lie in (0,1]");
        if (!(rho >= 0.0 && rho <= 1.0)) throw parameter_error("rho must lie in [0,1]");
        if (!(lambda1 >= 0.0)) throw parameter_error("lambda1 must be >= 0");
        if (!(lambda2 >= 0.0)) throw parameter_error("lambda2 must be >= 0");
        if (!(sigma_sq > 0.0)) throw parameter_error("sigma_sq must be > 0");
        if (!(sigma_zeta_sq >= 0.0)) throw parameter_error("sigma_zeta_sq must be >= 0");
    }

    // lambda2/lambda1, the ratio held fixed in the lambda -> 0 limit
    double penalty_ratio() const {
        if (lambda1 > 0.0) return lambda2 / lambda1;
        if (lambda2 == 0.0) return 0.0;
        throw parameter_error("lambda2 > 0 with lambda1 = 0 leaves lambda2/lambda1 undefined");
    }
};

struct CavityState {
    double tau = 0.0;          // Theta / sigma_xi
    double sigma_xi_sq = 0.0;
    double theta = 0.0;        // Theta = lambda1 * sigma_eff^2 (its finite lambda->0 limit)
    double rho_hat = 0.0;
    double chi_bar = 0.0;
    double sigma_eff_sq = 0.0;
    double q = 0.0;
    double residual1 = 0.0;    // alpha-scaled residuals of the two equations
    double residual2 = 0.0;
    bool perfect = false;
    bool multiple_roots = false;
};

namespace detail {

struct ChannelEval {
    double q, rho_hat, s;
};

// Scalar-channel averages at reduced threshold tt = Theta/sigma_xi and
// rescale s = 1 + (lambda2/lambda1) * Theta.
inline ChannelEval eval_channel(double tt, double sx, double rho, double r,
                                const SignalPrior& prior) {
    const double s = 1.0 + r * tt * sx;
    const double sx2 = sx * sx;
    double q = (1.0 - rho) * sx2 * h2(tt) / (s * s);
    double rho_hat = big_a0(rho, tt);
    if (rho > 0.0) {
        q += rho * sx2 *
             average(prior, sx, [&](double t0) { return channel_mse_nonzero(t0, tt, s); });
        rho_hat -= rho * average(prior, sx, [&](double t0) { return psi_theta(t0, tt); });
    }
    return {q, rho_hat, s};
}

// Residuals in u = (ln tt, ln sx). F1 is the sigma_xi^2 self-consistency,
// F2 the threshold equation Theta(1 + r*Theta - rho_hat/alpha) = vartheta*s,
// divided through by Theta so the lambda -> 0 limit is plain term deletion.
struct EnEquations {
    double alpha, rho, r, vartheta, sigma_zeta_sq;
    bool limit;
    const SignalPrior* prior;

    std::array<double, 2> operator()(const std::array<double, 2>& u) const {
        const double tt = std::exp(std::clamp(u[0], -60.0, 10.0));
        const double sx = std::exp(std::clamp(u[1], -340.0, 10.0));
        const auto ev = eval_channel(tt, sx, rho, r, *prior);
        const double f1 = (sigma_zeta_sq + ev.q / alpha) / (sx * sx) - 1.0;
        double f2 = 1.0 + r * tt * sx - ev.rho_hat / alpha;
        if (!limit) f2 -= vartheta * ev.s / (tt * sx);
        return {f1, f2};
    }
};

inline double res_norm(const std::array<double, 2>& f) {
    return std::max(std::fabs(f[0]), std::fabs(f[1]));
}

// damped 2x2 Newton with central-difference Jacobian
inline bool newton2(const EnEquations& eq, std::array<double, 2>& u, double tol,
                    std::array<double, 2>& f_out) {
    auto f = eq(u);
    if (!std::isfinite(f[0]) || !std::isfinite(f[1])) return false;
    for (int it = 0; it < 140; ++it) {
        if (res_norm(f) < tol) {
            f_out = f;
            return true;
        }
        double J[2][2];
        for (int j = 0; j < 2; ++j) {
            const double h = 1e-6 * std::max(1.0, std::fabs(u[j]));
            auto up = u, um = u;
            up[j] += h;
            um[j] -= h;
            const auto fp = eq(up), fm = eq(um);
            J[0][j] = (fp[0] - fm[0]) / (2.0 * h);
            J[1][j] = (fp[1] - fm[1]) / (2.0 * h);
        }
        const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        if (!std::isfinite(det) || std::fabs(det) < 1e-300) return false;
        double d0 = (-f[0] * J[1][1] + f[1] * J[0][1]) / det;
        double d1 = (-f[1] * J[0][0] + f[0] * J[1][0]) / det;
        const double dn = std::max(std::fabs(d0), std::fabs(d1));
        if (dn > 2.0) { // trust region: log-variable steps beyond e^2 overshoot
            d0 *= 2.0 / dn;
            d1 *= 2.0 / dn;
        }
        bool stepped = false;
        for (double t = 1.0; t >= 0x1p-25; t *= 0.5) {
            const std::array<double, 2> un{u[0] + t * d0, u[1] + t * d1};
            const auto fn = eq(un);
            if (std::isfinite(fn[0]) && std::isfinite(fn[1]) &&
                res_norm(fn) < res_norm(f) * (1.0 - 1e-4 * t)) {
                u = un;
                f = fn;
                stepped = true;
                break;
            }
        }
        if (!stepped) {
            f_out = f;
            return res_norm(f) < tol;
        }
    }
    f_out = f;
    return res_norm(f) < tol;
}

// Nested-bisection fallback: inner root of F1 in ln sx at fixed ln tt, outer
// sign change of F2 along the inner solution path.
inline bool nested_bisection(const EnEquations& eq, std::array<double, 2>& u_out) {
    const auto inner = [&](double lt) -> std::optional<double> {
        double prev_ls = -340.0;
        auto f_at = [&](double ls) { return eq({lt, ls})[0]; };
        double prev = f_at(prev_ls);
        for (double ls = -330.0; ls <= 10.0; ls += 2.5) {
            const double cur = f_at(ls);
            if (std::isfinite(prev) && std::isfinite(cur) && prev > 0.0 && cur <= 0.0) {
                double lo = prev_ls, hi = ls;
                for (int i = 0; i < 90; ++i) {
                    const double mid = 0.5 * (lo + hi);
                    (f_at(mid) > 0.0 ? lo : hi) = mid;
                }
                return 0.5 * (lo + hi);
            }
            prev_ls = ls;
            prev = cur;
        }
        return std::nullopt;
    };
    double prev_lt = 0.0, prev_g = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> prev_ls;
    for (double lt = -35.0; lt <= 5.0; lt += 0.25) {
        const auto ls = inner(lt);
        if (ls) {
            const double g = eq({lt, *ls})[1];
            if (std::isfinite(prev_g) && std::isfinite(g) && prev_g * g <= 0.0) {
                double lo = prev_lt, hi = lt;
                const double sign_lo = prev_g;
                for (int i = 0; i < 90; ++i) {
                    const double mid = 0.5 * (lo + hi);
                    const auto lsm = inner(mid);
                    if (!lsm) break;
                    const double gm = eq({mid, *lsm})[1];
                    (gm * sign_lo > 0.0 ? lo : hi) = mid;
                }
                const double lt_root = 0.5 * (lo + hi);
                const auto ls_root = inner(lt_root);
                if (ls_root) {
                    u_out = {lt_root, *ls_root};
                    return true;
                }
            }
            prev_g = g;
            prev_ls = ls;
        } else {
            prev_g = std::numeric_limits<double>::quiet_NaN();
        }
        prev_lt = lt;
    }
    return false;
}

inline double bisect_increasing(double target, double lo, double hi,
                                const auto& f) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < target ? lo : hi) = mid;
        if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Perfect-reconstruction phase (sigma_zeta^2 = 0, lambda -> 0, above the
// boundary): tau solves alpha = A2 + rho*kappa*tau^2 on the branch tau >=
// tau_c where rho_hat = A0 < alpha*s stays subcritical.
inline CavityState solve_en_perfect_phase(const EnsembleSpec& spec) {
    spec.validate();
    const double r = spec.penalty_ratio();
    const double kappa = r > 0.0 ? en_kappa(r, spec.prior.moments()) : 0.0;
    double tau;
    if (spec.rho == 0.0) {
        // alpha = h2(tau), strictly decreasing from 1
        double hi = 8.0;
        while (h2(hi) > spec.alpha) hi *= 2.0;
        double lo = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (h2(mid) > spec.alpha ? lo : hi) = mid;
        }
        tau = 0.5 * (lo + hi);
    } else {
        const auto [alpha_c, tau_c] = detail::boundary_alpha_c(spec.rho, kappa);
        if (!(spec.alpha > alpha_c))
            throw phase_error("(alpha, rho) on or below the reconstruction boundary; "
                              "no perfect-phase solution (solve the full equations instead)");
        const double hi =
            std::max(40.0, std::sqrt(spec.alpha / (spec.rho * (1.0 + kappa))) + 1.0);
        tau = detail::bisect_increasing(spec.alpha, tau_c, hi, [&](double t) {
            return big_a2(spec.rho, t) + spec.rho * kappa * t * t;
        });
    }
    CavityState st;
    st.tau = tau;
    st.rho_hat = big_a0(spec.rho, tau);
    st.sigma_eff_sq = spec.sigma_sq;
    st.perfect = true;
    st.residual1 = big_a2(spec.rho, tau) + spec.rho * kappa * tau * tau - spec.alpha;
    st.residual2 = 0.0;
    return st;
}

inline CavityState solve_bp_perfect_phase(const EnsembleSpec& spec) {
    if (spec.lambda2 != 0.0)
        throw parameter_error("basis pursuit requires lambda2 = 0");
    return solve_en_perfect_phase(spec);
}

// Full elastic-net equations; theta_limit switches to the exact lambda -> 0
// system. init (tau, sigma_xi) warm-starts continuation sweeps.
inline CavityState solve_en_full(const EnsembleSpec& spec, bool theta_limit = false,
                                 std::optional<std::array<double, 2>> init = std::nullopt) {
    spec.validate();
    if (!theta_limit && !(spec.lambda1 > 0.0))
        throw parameter_error("finite-penalty solve requires lambda1 > 0 (or the limit mode)");
    const double r = spec.penalty_ratio();

    if (theta_limit && spec.sigma_zeta_sq == 0.0) {
        const double alpha_c =
            spec.rho == 0.0
                ? 0.0
                : detail::boundary_alpha_c(
                      spec.rho, r > 0.0 ? en_kappa(r, spec.prior.moments()) : 0.0)
                      .first;
        if (spec.alpha > alpha_c)
            throw phase_error("noiseless lambda -> 0 above the boundary reconstructs "
                              "perfectly; use the perfect-phase solver");
    }

    const detail::EnEquations eq{spec.alpha, spec.rho, r, spec.lambda1 * spec.sigma_sq,
                                 spec.sigma_zeta_sq, theta_limit, &spec.prior};

    const double m2 = spec.prior.moments().m2;
    const double sx_cold =
        std::sqrt(std::max(spec.rho * m2 / spec.alpha + spec.sigma_zeta_sq, 1e-16));
    std::array<double, 2> u0{0.0, std::log(sx_cold)};
    if (init) u0 = {std::log((*init)[0]), std::log((*init)[1])};

    std::array<std::array<double, 2>, 13> starts;
    std::size_t ns = 0;
    starts[ns++] = u0;
    for (double f : {1.0, 0.8, 1.3})
        for (double g : {1e-1, 3e-2, 1e-2, 1e-3})
            starts[ns++] = {u0[0] + std::log(f), std::log(g)};

    // a quadrature refinement cap hit from an exploratory iterate disqualifies
    // that start, not the solve
    std::array<double, 2> u{}, fres{};
    bool ok = false;
    for (std::size_t i = 0; i < ns && !ok; ++i) {
        u = starts[i];
        try {
            ok = detail::newton2(eq, u, 1e-12, fres);
        } catch (const accuracy_error&) {
        }
    }
    if (!ok) {
        try {
            if (detail::nested_bisection(eq, u)) {
                ok = detail::newton2(eq, u, 1e-12, fres);
                if (!ok) {
                    fres = eq(u);
                    ok = detail::res_norm(fres) < 1e-10;
                }
            }
        } catch (const accuracy_error&) {
        }
    }
    if (!ok) {
        const auto fb = eq(u0);
        throw solver_error("cavity equations did not converge", fb[0], fb[1]);
    }

    // probe for a coexisting root from a deflated start; keep the one closer
    // to the initial guess (continuation-connected) and flag the ambiguity
    bool multiple = false;
    {
        std::array<double, 2> up{u[0], u[1] - std::log(30.0)}, fp{};
        bool found = false;
        try {
            found = detail::newton2(eq, up, 1e-12, fp);
        } catch (const accuracy_error&) {
        }
        if (found && (std::fabs(up[0] - u[0]) > 1e-3 || std::fabs(up[1] - u[1]) > 1e-3)) {
            multiple = true;
            const auto d = [&](const std::array<double, 2>& v) {
                return std::hypot(v[0] - u0[0], v[1] - u0[1]);
            };
            if (d(up) < d(u)) {
                u = up;
                fres = fp;
            }
        }
    }

    const double tt = std::exp(std::clamp(u[0], -60.0, 10.0));
    const double sx = std::exp(std::clamp(u[1], -340.0, 10.0));
    const auto ev = detail::eval_channel(tt, sx, spec.rho, r, spec.prior);

    CavityState st;
    st.tau = tt;
    st.sigma_xi_sq = sx * sx;
    st.theta = tt * sx;
    st.rho_hat = ev.rho_hat;
    st.q = ev.q;
    if (theta_limit) {
        st.sigma_eff_sq = std::numeric_limits<double>::infinity();
        st.chi_bar = std::numeric_limits<double>::infinity();
    } else {
        st.sigma_eff_sq = st.theta / spec.lambda1;
        st.chi_bar = st.rho_hat * st.sigma_eff_sq / ev.s;
    }
    st.residual1 = spec.alpha * fres[0];
    st.residual2 = spec.alpha * fres[1];
    st.multiple_roots = multiple;
    return st;
}

inline CavityState solve_bp_full(const EnsembleSpec& spec, bool theta_limit = false,
                                 std::optional<std::array<double, 2>> init = std::nullopt) {
    if (spec.lambda2 != 0.0)
        throw parameter_error("basis pursuit requires lambda2 = 0");
    return solve_en_full(spec, theta_limit, init);
}

// Ridge closed form; lambda2 is the ridge coefficient.
inline CavityState solve_ridge(const EnsembleSpec& spec, bool theta_limit = false) {
    spec.validate();
    if (spec.lambda1 != 0.0)
        throw parameter_error("ridge penalty is quadratic only; lambda1 must be 0");
    const double m2 = spec.prior.moments().m2;
    const double inf = std::numeric_limits<double>::infinity();

    CavityState st;
    st.rho_hat = 1.0; // dense estimator
    st.perfect = false;
    double theta;
    if (theta_limit) {
        theta = 1.0 / spec.alpha - 1.0;
        st.sigma_eff_sq = inf;
        st.chi_bar = inf;
    } else {
        if (!(spec.lambda2 > 0.0))
            throw parameter_error("finite ridge solve requires lambda2 > 0 (or the limit mode)");
        const double lam = spec.lambda2, a = spec.alpha;
        const double qa = a * lam;
        const double qb = a - 1.0 - a * spec.sigma_sq * lam;
        const double qc = -a * spec.sigma_sq;
        const double e = (-qb + std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa);
        if (!(e > 0.0)) throw solver_error("ridge susceptibility root not positive", e, 0.0);
        st.sigma_eff_sq = e;
        theta = lam * e;
        st.chi_bar = e / (1.0 + theta);
    }
    const double denom = (1.0 + theta) * (1.0 + theta) - 1.0 / spec.alpha;
    const double num = spec.sigma_zeta_sq + theta * theta * spec.rho * m2;
    st.q = denom > 0.0 ? num / denom : (num == 0.0 ? 0.0 : inf);
    st.theta = theta;
    st.sigma_xi_sq = spec.sigma_zeta_sq + st.q / spec.alpha;
    st.tau = st.sigma_xi_sq > 0.0 ? theta / std::sqrt(st.sigma_xi_sq) : 0.0;
    st.perfect = st.q == 0.0 && spec.sigma_zeta_sq == 0.0;
    return st;
}

// Remark-1 detection rates for the lambda -> 0 ridge estimate thresholded at
// theta: xhat ~ N(alpha*x0, alpha*(1-alpha)*rho*m2).
inline std::pair<double, double> ridge_threshold_rates(const EnsembleSpec& spec,
                                                       Threshold threshold) {
    spec.validate();
    const double v = spec.alpha * (1.0 - spec.alpha) * spec.rho * spec.prior.moments().m2;
    const double sv = std::max(std::sqrt(v), 1e-300);
    const double th = threshold.theta;
    const double fpr = 2.0 * gauss_ccdf(th / sv);
    double fnr = 0.0;
    if (spec.rho > 0.0 && th > 0.0)
        fnr = average(spec.prior, 1.0, [&](double x0) {
            const double m = spec.alpha * x0;
            return gauss_ccdf((m - th) / sv) - gauss_ccdf((m + th) / sv);
        });
    return {fpr, fnr};
}

} // namespace cavity
