// Walks the noiseless lambda -> 0 phase boundary: the parametric (tau, alpha_c, rho_c)
// curve for basis pursuit, the shift produced by an l2 admixture, and the sparse-limit
// asymptote rho_c ~ alpha / (2 ln(1/alpha)).
#include <cstdio>

#include "cavity/phase_boundary.hpp"

using namespace cavity;

int main() {
    std::printf("basis pursuit boundary, parametrized by the threshold tau\n");
    std::printf("%10s %14s %14s %14s\n", "tau", "alpha_c", "rho_c", "asymptote");
    for (double tau : {0.01, 0.3, 0.8, 1.5, 2.5, 4.0, 6.0}) {
        const BoundaryPoint pt = boundary_parametric(tau);
        std::printf("%10.3f %14.8f %14.8f %14.8f\n", tau, pt.alpha_c, pt.rho_c,
                    bp_sparse_asymptote(pt.alpha_c));
    }

    const SignalPrior prior = SignalPrior::parse("gaussian:1");
    std::printf("\ncritical alpha at fixed density, bp vs elastic net\n");
    std::printf("%10s %14s %14s %14s\n", "rho", "bp", "en r=0.4", "en r=0.8");
    for (double rho : {0.05, 0.1, 0.15, 0.2, 0.3, 0.5}) {
        const double bp = bp_alpha_c(rho).first;
        const double en4 = en_boundary(rho, 0.4, prior).first;
        const double en8 = en_boundary(rho, 0.8, prior).first;
        std::printf("%10.2f %14.8f %14.8f %14.8f\n", rho, bp, en4, en8);
    }

    std::printf("\nsparse limit: rho_c(alpha) against alpha / (2 ln(1/alpha))\n");
    std::printf("%10s %14s %14s %10s\n", "alpha", "rho_c", "asymptote", "ratio");
    for (double alpha : {1e-2, 1e-3, 1e-4, 1e-5}) {
        double lo = 1e-12, hi = 0.999;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (bp_alpha_c(mid).first < alpha ? lo : hi) = mid;
        }
        const double rho_c = 0.5 * (lo + hi);
        const double asym = bp_sparse_asymptote(alpha);
        std::printf("%10.0e %14.8e %14.8e %10.5f\n", alpha, rho_c, asym, rho_c / asym);
    }
    return 0;
}
