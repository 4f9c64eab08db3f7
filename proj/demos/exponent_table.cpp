// Tabulates fitted critical exponents against their predicted values for the three
// scaling regimes (distance to the boundary, measurement noise, penalty strength)
// over small-signal density exponents gamma in {0, 1}, then shows the logarithmic
// law obeyed by a gapped prior.
#include <cstdio>
#include <string>

#include "cavity/scaling.hpp"

using namespace cavity;

namespace {

SignalPrior prior_for(double gamma) {
    return gamma == 0.0 ? SignalPrior::parse("gaussian:1")
                        : SignalPrior::parse("power_law:" + std::to_string(gamma) + ":1");
}

void row(const char* regime, const char* penalty, double gamma, double expected,
         const ScalingFit& fit) {
    std::printf("%-8s %-4s %6.1f %10.4f %10.4f %12.2e %10.6f\n", regime, penalty, gamma, expected,
                fit.exponent, fit.exponent_stderr, fit.r_squared);
}

} // namespace

int main() {
    const double rho = 0.2;
    const double ratio = 0.4;
    std::printf("%-8s %-4s %6s %10s %10s %12s %10s\n", "regime", "pen", "gamma", "expected",
                "fitted", "stderr", "r^2");
    for (double gamma : {0.0, 1.0}) {
        const SignalPrior prior = prior_for(gamma);
        row("alpha", "bp", gamma, 2.0 / (1.0 + gamma),
            exponent_alpha_approach(Penalty::bp, rho, prior));
        row("noise", "bp", gamma, 2.0 / (3.0 + gamma), exponent_noise(Penalty::bp, rho, prior));
    }
    row("lambda", "bp", 0.0, 4.0 / 3.0, exponent_lambda(Penalty::bp, rho, prior_for(0.0)));
    row("lambda", "en", 0.0, 2.0 / 2.0, exponent_lambda(Penalty::en, rho, prior_for(0.0), ratio));

    const SignalPrior gapped = SignalPrior::parse("gapped:0.5:1");
    const ScalingFit log_fit = exponent_alpha_approach(Penalty::bp, rho, gapped);
    std::printf("\ngapped prior: 1/q vs ln(1/(alpha_c - alpha)) slope %.4f, r^2 %.6f\n",
                log_fit.exponent, log_fit.r_squared);
    return 0;
}
