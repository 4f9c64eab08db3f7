#pragma once
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "cavity/errors.hpp"

namespace cavity {
namespace detail {

// n-point Gauss-Legendre rule on [-1,1]: Newton on the Legendre recurrence.
inline std::vector<std::pair<double, double>> make_gl_rule(int n) {
    std::vector<std::pair<double, double>> rule(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) {
                p0 = 1.0;
                p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                break;
            }
        }
        rule[i] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
    }
    return rule;
}

inline const std::vector<std::pair<double, double>>& gl16() {
    static const auto rule = make_gl_rule(16);
    return rule;
}
inline const std::vector<std::pair<double, double>>& gl32() {
    static const auto rule = make_gl_rule(32);
    return rule;
}

template <class F>
double gl_panel(const F& f, double a, double b, const std::vector<std::pair<double, double>>& rule) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (const auto& [x, w] : rule) acc += w * f(mid + half * x);
    return acc * half;
}

template <class F>
double gl_panel_abs(const F& f, double a, double b, const std::vector<std::pair<double, double>>& rule) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (const auto& [x, w] : rule) acc += w * std::fabs(f(mid + half * x));
    return acc * half;
}

template <class F>
double adapt_panel(const F& f, double a, double b, double tol_abs, int depth) {
    const double coarse = gl_panel(f, a, b, gl16());
    const double fine = gl_panel(f, a, b, gl32());
    const double err = std::fabs(fine - coarse);
    if (err <= tol_abs) return fine;
    // do not chase differences below the evaluation-noise floor of the panel
    if (err <= 3e-14 * gl_panel_abs(f, a, b, gl32())) return fine;
    if (depth >= 28) throw accuracy_error("adaptive quadrature refinement limit", err);
    const double m = 0.5 * (a + b);
    return adapt_panel(f, a, m, 0.5 * tol_abs, depth + 1) +
           adapt_panel(f, m, b, 0.5 * tol_abs, depth + 1);
}

} // namespace detail

// Adaptive Gauss-Legendre with user knots (integrand knees); relative target
// measured against the rough whole-interval estimate.
template <class F>
double integrate(const F& f, double a, double b, const std::vector<double>& knots = {},
                 double rel_tol = 1e-11) {
    if (!(b > a)) return 0.0;
    std::vector<double> edges{a};
    for (double k : knots)
        if (k > a && k < b) edges.push_back(k);
    edges.push_back(b);
    std::sort(edges.begin(), edges.end());

    double rough = 0.0;
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        rough += std::fabs(detail::gl_panel(f, edges[i], edges[i + 1], detail::gl32()));
    const double tol_abs = std::max(rough, 1e-300) * rel_tol;

    double total = 0.0;
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        total += detail::adapt_panel(f, edges[i], edges[i + 1],
                                     tol_abs * (edges[i + 1] - edges[i]) / (b - a), 0);
    return total;
}

} // namespace cavity
