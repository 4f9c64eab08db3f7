#pragma once
#include <stdexcept>
#include <string>
#include <vector>

namespace cavity {

// exit-code taxonomy: parameter/phase -> config (2), solver/accuracy/convergence -> solver (3), io -> 4

struct parameter_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// (alpha, rho) on the wrong side of the phase boundary for the requested solver
struct phase_error : std::domain_error {
    using std::domain_error::domain_error;
};

struct solver_error : std::runtime_error {
    double residual1, residual2;
    solver_error(const std::string& msg, double r1, double r2)
        : std::runtime_error(msg + " [residuals " + std::to_string(r1) + ", " + std::to_string(r2) + "]"),
          residual1(r1), residual2(r2) {}
};

// quadrature refinement limit reached
struct accuracy_error : std::runtime_error {
    double residual;
    accuracy_error(const std::string& msg, double r)
        : std::runtime_error(msg + " [residual " + std::to_string(r) + "]"), residual(r) {}
};

// iterative optimizer hit its cap; carries the best iterate
struct convergence_error : std::runtime_error {
    double kkt_violation;
    std::vector<double> best_iterate;
    convergence_error(const std::string& msg, double viol, std::vector<double> best)
        : std::runtime_error(msg + " [kkt " + std::to_string(viol) + "]"),
          kkt_violation(viol), best_iterate(std::move(best)) {}
};

// scaling sweep completed with some grid points unsolved
struct partial_result_error : std::runtime_error {
    std::vector<double> failed_points;
    partial_result_error(const std::string& msg, std::vector<double> pts)
        : std::runtime_error(msg + describe(pts)), failed_points(std::move(pts)) {}

  private:
    static std::string describe(const std::vector<double>& pts) {
        std::string out = " [failed at";
        for (double p : pts) out += " " + std::to_string(p);
        return out + "]";
    }
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cavity
