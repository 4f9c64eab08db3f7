#pragma once
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "cavity/cavity_solver.hpp"
#include "cavity/errors.hpp"
#include "cavity/priors.hpp"
#include "cavity/rng.hpp"
#include "cavity/scalar_math.hpp"

namespace cavity {

// One random measurement realization y = H x0 + zeta with H_ia ~ N(0, 1/M).
struct Instance {
    Eigen::MatrixXd h;
    Eigen::VectorXd x0;
    Eigen::VectorXd y;
    double zeta_sigma_sq = 0.0;
};

struct McEstimate {
    double mse_mean = 0.0;
    double mse_stderr = 0.0;
    double rho_hat_mean = 0.0;
    std::size_t trials = 0;
    double kkt_max_violation = 0.0;
};

// H filled row-major from stream 0, support from stream 1, nonzero values from
// stream 2, noise from stream 3: each ingredient is independently reproducible.
inline Instance generate_instance(const EnsembleSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw parameter_error("generate_instance requires n >= 1");
    const auto m = static_cast<std::size_t>(std::llround(spec.alpha * static_cast<double>(n)));
    const auto k = static_cast<std::size_t>(std::llround(spec.rho * static_cast<double>(n)));
    if (m < 1) throw parameter_error("generate_instance requires round(alpha n) >= 1");
    if (k > n) throw parameter_error("generate_instance requires round(rho n) <= n");

    Instance inst;
    inst.zeta_sigma_sq = spec.sigma_zeta_sq;

    RngStream hs(derive_seed(seed, 0));
    const double hscale = 1.0 / std::sqrt(static_cast<double>(m));
    inst.h.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t a = 0; a < n; ++a)
            inst.h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) =
                hscale * hs.normal();

    inst.x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (k > 0) {
        RngStream ps(derive_seed(seed, 1));
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t j = 0; j < k; ++j)
            std::swap(idx[j], idx[j + ps.below(n - j)]);
        const std::vector<double> vals = sample(spec.prior, 1.0, k, derive_seed(seed, 2));
        for (std::size_t j = 0; j < k; ++j)
            inst.x0(static_cast<Eigen::Index>(idx[j])) = vals[j];
    }

    inst.y = inst.h * inst.x0;
    if (spec.sigma_zeta_sq > 0.0) {
        RngStream zs(derive_seed(seed, 3));
        const double zscale = std::sqrt(spec.sigma_zeta_sq);
        for (std::size_t i = 0; i < m; ++i)
            inst.y(static_cast<Eigen::Index>(i)) += zscale * zs.normal();
    }
    return inst;
}

namespace detail {

// max_a distance of h_a^T(y - Hx) - lambda2 x_a from the lambda1 subdifferential
inline double en_kkt_violation(const Instance& inst, const Eigen::VectorXd& x, double lambda1,
                               double lambda2) {
    const Eigen::VectorXd c = inst.h.transpose() * (inst.y - inst.h * x);
    double viol = 0.0;
    for (Eigen::Index a = 0; a < x.size(); ++a) {
        const double w = c(a) - lambda2 * x(a);
        if (x(a) == 0.0)
            viol = std::max(viol, std::fabs(w) - lambda1);
        else
            viol = std::max(viol, std::fabs(w - lambda1 * (x(a) > 0.0 ? 1.0 : -1.0)));
    }
    return std::max(viol, 0.0);
}

// One cyclic pass; maintains r = y - Hx incrementally. Returns the largest
// coordinate move, relative to the largest coordinate magnitude seen.
inline double cd_sweep(const Instance& inst, double lambda1, double lambda2,
                       const Eigen::VectorXd& diag, Eigen::VectorXd& x, Eigen::VectorXd& r,
                       bool active_only, bool* support_changed = nullptr) {
    double max_move = 0.0, max_mag = 1e-300;
    for (Eigen::Index a = 0; a < x.size(); ++a) {
        if (active_only && x(a) == 0.0) continue;
        if (diag(a) + lambda2 <= 0.0) continue;
        const double old = x(a);
        const double z = inst.h.col(a).dot(r) + diag(a) * old;
        const double mag = std::fabs(z) - lambda1;
        const double next = mag > 0.0 ? (z > 0.0 ? mag : -mag) / (diag(a) + lambda2) : 0.0;
        if (next != old) {
            x(a) = next;
            r -= inst.h.col(a) * (next - old);
            max_move = std::max(max_move, std::fabs(next - old));
            if (support_changed && ((next == 0.0) != (old == 0.0) || next * old < 0.0))
                *support_changed = true;
        }
        max_mag = std::max(max_mag, std::fabs(next));
    }
    return max_move / max_mag;
}

// Primal active-set refinement on the current support. Once the penalties are
// microscopic and the support exceeds the row count, the curvature along the
// support's null directions is just lambda2, so coordinate descent contracts
// the remaining error by ~lambda2 per sweep and stalls; only exact solves can
// finish. Each round solves stationarity on the working support by Cholesky
// with iterative refinement, then either walks to the first sign crossing and
// drops that coordinate, or installs the solve and adds the worst violator.
inline bool active_set_polish(const Instance& inst, double lambda1, double lambda2, double tol,
                              Eigen::VectorXd& x) {
    const Eigen::Index n = inst.h.cols();
    std::vector<Eigen::Index> act;
    std::vector<double> sgn;
    for (Eigen::Index a = 0; a < n; ++a)
        if (x(a) != 0.0) {
            act.push_back(a);
            sgn.push_back(x(a) > 0.0 ? 1.0 : -1.0);
        }
    Eigen::Index last_add = -1;
    for (int outer = 0; outer < 500; ++outer) {
        const auto k = static_cast<Eigen::Index>(act.size());
        if (k == 0 || k > 4000) return false;
        Eigen::MatrixXd ha(inst.h.rows(), k);
        Eigen::VectorXd s(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            ha.col(j) = inst.h.col(act[j]);
            s(j) = sgn[j];
        }
        Eigen::MatrixXd gram = ha.transpose() * ha;
        gram.diagonal().array() += lambda2;
        const Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) return false;
        const Eigen::VectorXd b = ha.transpose() * inst.y - lambda1 * s;
        Eigen::VectorXd z = llt.solve(b);
        for (int ref = 0; ref < 4; ++ref) {
            const Eigen::VectorXd res = b - gram.selfadjointView<Eigen::Lower>() * z;
            if (res.cwiseAbs().maxCoeff() <= 0.1 * tol) break;
            z += llt.solve(res);
        }

        double tmin = 2.0;
        Eigen::Index drop = -1;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (z(j) * s(j) > 0.0) continue;
            const double xj = x(act[j]);
            const double t = xj != z(j) ? xj / (xj - z(j)) : 0.0;
            if (t < tmin) {
                tmin = t;
                drop = j;
            }
        }
        if (drop >= 0) {
            if (act[drop] == last_add && tmin == 0.0) return false;
            for (Eigen::Index j = 0; j < k; ++j) {
                const double xj = x(act[j]);
                x(act[j]) = xj + tmin * (z(j) - xj);
            }
            x(act[drop]) = 0.0;
            act.erase(act.begin() + drop);
            sgn.erase(sgn.begin() + drop);
            continue;
        }
        for (Eigen::Index j = 0; j < k; ++j) x(act[j]) = z(j);

        const Eigen::VectorXd c = inst.h.transpose() * (inst.y - inst.h * x);
        double on = 0.0, off = 0.0;
        Eigen::Index add = -1;
        for (Eigen::Index a = 0; a < n; ++a) {
            if (x(a) == 0.0) {
                const double v = std::fabs(c(a)) - lambda1;
                if (v > off) {
                    off = v;
                    add = a;
                }
            } else {
                const double w = c(a) - lambda2 * x(a) - lambda1 * (x(a) > 0.0 ? 1.0 : -1.0);
                on = std::max(on, std::fabs(w));
            }
        }
        if (std::max(on, off) <= tol) return true;
        if (off <= on || add < 0) return false;
        act.push_back(add);
        sgn.push_back(c(add) > 0.0 ? 1.0 : -1.0);
        last_add = add;
    }
    return false;
}

} // namespace detail

// Cyclic coordinate descent on (1/2)|y - Hx|^2 + lambda1 |x|_1 + (lambda2/2)|x|^2
// (sigma^2 = 1 convention), warm-started along a geometric lambda1 path so the
// near-zero penalties of the basis-pursuit limit stay tractable. Stops when the
// KKT violation falls below tol.
inline Eigen::VectorXd solve_elastic_net(const Instance& inst, double lambda1, double lambda2,
                                         double tol = 1e-10) {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
        throw parameter_error("solve_elastic_net requires lambda1, lambda2 >= 0");
    if (!(tol > 0.0)) throw parameter_error("solve_elastic_net requires tol > 0");

    const Eigen::Index n = inst.h.cols();
    Eigen::VectorXd diag(n);
    for (Eigen::Index a = 0; a < n; ++a) diag(a) = inst.h.col(a).squaredNorm();

    const double lmax = (inst.h.transpose() * inst.y).cwiseAbs().maxCoeff();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd r = inst.y;
    double viol = 0.0;
    // each intermediate stop only needs its KKT residue down to the natural
    // coordinate-descent plateau (~1e-3 l1); the plateau rides the path down so
    // the final stop enters already near tol
    double l1 = std::max(0.5 * lmax, lambda1);
    for (bool final_step = false; !final_step;) {
        final_step = l1 <= lambda1 || l1 <= 1e-12 * lmax;
        if (final_step) l1 = lambda1;
        const double step_tol = final_step ? tol : std::max(tol, 5e-3 * l1);
        const int cap = final_step ? 2000 : 40;
        bool done = false, exact_tried = false;
        int rounds = 0;
        for (; rounds < cap; ++rounds) {
            r = inst.y - inst.h * x;
            viol = detail::en_kkt_violation(inst, x, l1, lambda2);
            if (viol <= step_tol) {
                done = true;
                break;
            }
            bool support_changed = false;
            detail::cd_sweep(inst, l1, lambda2, diag, x, r, false, &support_changed);
            for (int it = 0; it < 50; ++it)
                if (detail::cd_sweep(inst, l1, lambda2, diag, x, r, true) < 1e-13) break;
            if (support_changed) exact_tried = false;
            if (final_step && ((!support_changed && !exact_tried) || rounds % 25 == 24)) {
                exact_tried = true;
                detail::active_set_polish(inst, l1, lambda2, step_tol, x);
            }
        }
        if (!done && final_step)
            throw convergence_error("coordinate descent hit its iteration cap", viol,
                                    std::vector<double>(x.data(), x.data() + x.size()));
        l1 *= rounds <= 2 ? 0.25 : 0.5;
    }
    return x;
}

// Ridge / least-squares solve through the smaller Gram system; lambda = 0 gives
// the minimum-norm solution via conjugate gradients on the normal equations.
inline Eigen::VectorXd solve_ridge_direct(const Instance& inst, double lambda) {
    if (!(lambda >= 0.0)) throw parameter_error("solve_ridge_direct requires lambda >= 0");
    const Eigen::Index m = inst.h.rows(), n = inst.h.cols();

    const auto cg = [](const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                       const Eigen::VectorXd& b) {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(b.size());
        Eigen::VectorXd res = b, p = b;
        const double b2 = b.squaredNorm();
        if (b2 == 0.0) return u;
        double r2 = b2;
        const auto cap = static_cast<int>(20 * b.size());
        for (int it = 0; it < cap; ++it) {
            const Eigen::VectorXd ap = apply(p);
            const double alpha = r2 / p.dot(ap);
            u += alpha * p;
            res -= alpha * ap;
            const double r2n = res.squaredNorm();
            if (r2n <= 1e-26 * b2) return u;
            p = res + (r2n / r2) * p;
            r2 = r2n;
        }
        throw accuracy_error("conjugate-gradient stagnation in ridge solve",
                             std::sqrt(r2 / b2));
    };

    Eigen::VectorXd x;
    if (m <= n) {
        const Eigen::VectorXd u = cg(
            [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
                return inst.h * (inst.h.transpose() * p) + lambda * p;
            },
            inst.y);
        x = inst.h.transpose() * u;
    } else {
        x = cg(
            [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
                return inst.h.transpose() * (inst.h * p) + lambda * p;
            },
            inst.h.transpose() * inst.y);
    }

    const Eigen::VectorXd g0 = inst.h.transpose() * inst.y;
    const double scale = std::max(g0.norm(), 1e-300);
    const double resid =
        (inst.h.transpose() * (inst.h * x) + lambda * x - g0).norm() / scale;
    if (resid > 1e-10)
        throw accuracy_error("ridge stationarity residual too large", resid);
    return x;
}

// Fraction of entries above rel_threshold * max|x|; the paper's estimated sparsity.
inline double empirical_rho_hat(const Eigen::VectorXd& xhat, double rel_threshold = 1e-6) {
    if (!(rel_threshold > 0.0)) throw parameter_error("empirical_rho_hat requires rel_threshold > 0");
    if (xhat.size() == 0) return 0.0;
    const double mx = xhat.cwiseAbs().maxCoeff();
    if (mx == 0.0) return 0.0;
    const double thr = rel_threshold * mx;
    Eigen::Index cnt = 0;
    for (Eigen::Index a = 0; a < xhat.size(); ++a)
        if (std::fabs(xhat(a)) > thr) ++cnt;
    return static_cast<double>(cnt) / static_cast<double>(xhat.size());
}

// Repeated-realization estimate. lambda1 > 0 dispatches to coordinate descent,
// lambda1 = 0 to the ridge/least-squares path. Non-convergent trials are excluded
// and the run fails if they exceed 10%.
inline McEstimate run_trials(const EnsembleSpec& spec, std::size_t n, std::size_t trials,
                             std::uint64_t seed, double tol = 1e-10) {
    if (trials < 2) throw parameter_error("run_trials requires trials >= 2");
    std::vector<double> mses, rhos;
    mses.reserve(trials);
    rhos.reserve(trials);
    double kkt_max = 0.0;
    std::size_t excluded = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Instance inst = generate_instance(spec, n, derive_seed(seed, t));
        Eigen::VectorXd xhat;
        double kkt = 0.0;
        try {
            if (spec.lambda1 > 0.0) {
                xhat = solve_elastic_net(inst, spec.lambda1, spec.lambda2, tol);
                kkt = detail::en_kkt_violation(inst, xhat, spec.lambda1, spec.lambda2);
            } else {
                xhat = solve_ridge_direct(inst, spec.lambda2);
            }
        } catch (const convergence_error&) {
            ++excluded;
            continue;
        } catch (const accuracy_error&) {
            ++excluded;
            continue;
        }
        mses.push_back((xhat - inst.x0).squaredNorm() / static_cast<double>(n));
        rhos.push_back(empirical_rho_hat(xhat));
        kkt_max = std::max(kkt_max, kkt);
    }
    if (excluded * 10 > trials)
        throw solver_error("non-convergent trials exceeded 10%", static_cast<double>(excluded),
                           static_cast<double>(trials));

    const auto cnt = static_cast<double>(mses.size());
    const double mean = std::accumulate(mses.begin(), mses.end(), 0.0) / cnt;
    double var = 0.0;
    for (double v : mses) var += (v - mean) * (v - mean);
    var /= (cnt - 1.0);
    McEstimate est;
    est.mse_mean = mean;
    est.mse_stderr = std::sqrt(var / cnt);
    est.rho_hat_mean = std::accumulate(rhos.begin(), rhos.end(), 0.0) / cnt;
    est.trials = mses.size();
    est.kkt_max_violation = kkt_max;
    return est;
}

} // namespace cavity
