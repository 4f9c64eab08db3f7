#pragma once
#include <cmath>
#include <utility>

#include "cavity/errors.hpp"
#include "cavity/priors.hpp"
#include "cavity/scalar_math.hpp"

namespace cavity {

struct BoundaryPoint {
    double tau_c = 0.0;
    double alpha_c = 0.0;
    double rho_c = 0.0;
};

// Elastic-net penalty enters the boundary only through the dimensionless
// kappa built from lambda2/lambda1 and the prior moments: the rescale factor
// (1 + r|x0|)^2 averaged over pi minus 1.
inline double en_kappa(double lambda_ratio, const PriorMoments& m) {
    return 2.0 * lambda_ratio * m.m1_abs + lambda_ratio * lambda_ratio * m.m2;
}

// Parametric boundary for threshold penalties; kappa = 0 is basis pursuit.
inline BoundaryPoint boundary_parametric(double tau, double kappa = 0.0) {
    if (!(tau >= 0.0)) throw parameter_error("boundary_parametric requires tau >= 0");
    const double phi = gauss_pdf(tau), Q = gauss_ccdf(tau);
    const double gap = 2.0 * (phi - tau * Q); // = tau^2 Q - ... >= 0, -> 0 as tau grows
    const double denom = tau * (1.0 + kappa) + gap;
    if (denom <= 0.0) return {tau, 1.0, 1.0}; // tau = 0 limit point
    return {tau, (2.0 * phi + 2.0 * tau * Q * kappa) / denom, gap / denom};
}

inline BoundaryPoint bp_boundary_parametric(double tau) { return boundary_parametric(tau, 0.0); }

namespace detail {

// rho_c(tau; kappa) is strictly decreasing from 1 to 0: bisection on tau.
inline std::pair<double, double> boundary_alpha_c(double rho, double kappa) {
    if (!(rho > 0.0 && rho <= 1.0)) throw parameter_error("boundary inversion requires 0 < rho <= 1");
    if (rho == 1.0) return {1.0, 0.0};
    double lo = 0.0, hi = 8.0;
    while (boundary_parametric(hi, kappa).rho_c > rho) {
        hi *= 2.0;
        if (hi > 1e6) throw solver_error("boundary bracket expansion failed",
                                         boundary_parametric(hi, kappa).rho_c - rho, 0.0);
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (boundary_parametric(mid, kappa).rho_c > rho ? lo : hi) = mid;
        if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
    }
    const double tau_c = 0.5 * (lo + hi);
    return {boundary_parametric(tau_c, kappa).alpha_c, tau_c};
}

} // namespace detail

// (alpha_c, tau_c) of basis pursuit at given rho
inline std::pair<double, double> bp_alpha_c(double rho) {
    return detail::boundary_alpha_c(rho, 0.0);
}

// extreme-sparsity approximation rho ~ alpha / (2 ln(1/alpha))
inline double bp_sparse_asymptote(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw parameter_error("bp_sparse_asymptote requires 0 < alpha < 1");
    return alpha / (2.0 * std::log(1.0 / alpha));
}

// (alpha_c, tau_c) of elastic net at given rho and lambda2/lambda1
inline std::pair<double, double> en_boundary(double rho, double lambda_ratio,
                                             const SignalPrior& prior) {
    if (!(lambda_ratio >= 0.0)) throw parameter_error("en_boundary requires lambda_ratio >= 0");
    return detail::boundary_alpha_c(rho, en_kappa(lambda_ratio, prior.moments()));
}

} // namespace cavity
