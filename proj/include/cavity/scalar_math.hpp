#pragma once
#include <cmath>

#include "cavity/errors.hpp"

// Elementary building blocks of the self-consistency equations.
//
// Convention: gauss_ccdf is the COMPLEMENTARY cdf, Phi(x) = int_x^inf phi(z) dz.
// All decompositions below (h2, big_a2, big_a0, psi_*) follow that convention.

namespace cavity {

inline constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343819;
inline constexpr double inv_sqrt_2   = 0.7071067811865475244008443621048490;

struct Threshold {
    double theta;
    explicit Threshold(double t) : theta(t) {
        if (!(t >= 0.0)) throw parameter_error("Threshold requires theta >= 0");
    }
};

inline double gauss_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

// std::erfc switches to its asymptotic form internally, so this stays
// accurate to ~1 ulp out to underflow (x ~ 38), which the tau <= 8
// boundary sweeps need.
inline double gauss_ccdf(double x) { return 0.5 * std::erfc(x * inv_sqrt_2); }

inline double soft_threshold(double t, Threshold theta) {
    if (t > theta.theta) return t - theta.theta;
    if (t < -theta.theta) return t + theta.theta;
    return 0.0;
}

// h2(tau) = 2{(1+tau^2)Phi(tau) - tau phi(tau)}: zero-signal channel MSE / sigma_xi^2
inline double h2(double tau) {
    return 2.0 * ((1.0 + tau * tau) * gauss_ccdf(tau) - tau * gauss_pdf(tau));
}

inline double big_a2(double rho, double tau) {
    return (1.0 - rho) * h2(tau) + rho * (1.0 + tau * tau);
}

inline double big_a0(double rho, double tau) {
    return 2.0 * (1.0 - rho) * gauss_ccdf(tau) + rho;
}

// 1 - Phi(tau+tau0) - Phi(tau-tau0), written as Phi(tau0-tau) - Phi(tau0+tau)
// so large tau0 does not cancel O(1) terms down to noise.
inline double psi_theta(double tau0, double tau) {
    return gauss_ccdf(tau0 - tau) - gauss_ccdf(tau0 + tau);
}

inline double psi_xi(double tau0, double tau) {
    return (1.0 + tau * tau - tau0 * tau0) * psi_theta(tau0, tau)
         + (tau - tau0) * gauss_pdf(tau + tau0)
         + (tau + tau0) * gauss_pdf(tau - tau0);
}

// int_a^inf phi(z) (z-b)^2 dz
inline double gauss_int(double a, double b) {
    return (1.0 + b * b) * gauss_ccdf(a) + (a - 2.0 * b) * gauss_pdf(a);
}

// Exact scalar-channel MSE / sigma_xi^2 for a nonzero signal at tau0 = |x0|/sigma_xi,
// threshold tau = Theta/sigma_xi and elastic rescale s = 1 + lambda2*sigma_eff^2:
// xhat = eta_soft(x0 + xi; Theta)/s. s = 1 reduces to 1 + tau^2 - psi_xi(tau0, tau).
inline double channel_mse_nonzero(double tau0, double tau, double s) {
    tau0 = std::fabs(tau0);
    if (tau0 > 1e8) { // both tails are pure (z-b)^2 mass; avoids inf*0
        const double b = tau + (s - 1.0) * tau0;
        return (1.0 + b * b) / (s * s);
    }
    const double a  = tau - tau0, b  = tau + (s - 1.0) * tau0;
    const double ap = tau + tau0, bp = tau - (s - 1.0) * tau0;
    return (gauss_int(a, b) + gauss_int(ap, bp)) / (s * s)
         + tau0 * tau0 * psi_theta(tau0, tau);
}

} // namespace cavity
