#pragma once
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "cavity/errors.hpp"
#include "cavity/quadrature.hpp"
#include "cavity/rng.hpp"
#include "cavity/scalar_math.hpp"

namespace cavity {

struct PriorMoments {
    double m1_abs = 0.0;
    double m2 = 0.0;
};

// Distribution pi(x0) of the nonzero entries; symmetric about 0. The full
// signal law is rho*pi + (1-rho)*delta0, with rho supplied at sampling time.
class SignalPrior {
  public:
    enum class Kind { gaussian, power_law, gapped };

    static SignalPrior gaussian(double variance) {
        if (!(variance > 0.0)) throw parameter_error("gaussian prior requires variance > 0");
        return SignalPrior(Kind::gaussian, variance, 0.0);
    }
    // density F*|x|^gamma on [-cutoff, cutoff]
    static SignalPrior power_law(double gamma, double cutoff = 1.0) {
        if (!(gamma > -1.0)) throw parameter_error("power_law prior requires gamma > -1");
        if (!(cutoff > 0.0)) throw parameter_error("power_law prior requires cutoff > 0");
        return SignalPrior(Kind::power_law, gamma, cutoff);
    }
    // uniform on +-[gap, gap+width]
    static SignalPrior gapped(double gap, double width) {
        if (!(gap > 0.0)) throw parameter_error("gapped prior requires gap > 0");
        if (!(width > 0.0)) throw parameter_error("gapped prior requires width > 0");
        return SignalPrior(Kind::gapped, gap, width);
    }

    Kind kind() const { return kind_; }
    double variance() const { return p1_; }
    double gamma() const { return p1_; }
    double cutoff() const { return p2_; }
    double gap() const { return p1_; }
    double width() const { return p2_; }

    // normalization of the signed power-law density pi(x) = F|x|^gamma
    double scale_f() const {
        return (p1_ + 1.0) / (2.0 * std::pow(p2_, p1_ + 1.0));
    }

    PriorMoments moments() const {
        switch (kind_) {
            case Kind::gaussian:
                return {std::sqrt(2.0 * p1_ / M_PI), p1_};
            case Kind::power_law:
                return {(p1_ + 1.0) * p2_ / (p1_ + 2.0), (p1_ + 1.0) * p2_ * p2_ / (p1_ + 3.0)};
            case Kind::gapped: {
                const double hi = p1_ + p2_;
                return {p1_ + 0.5 * p2_, (hi * hi * hi - p1_ * p1_ * p1_) / (3.0 * p2_)};
            }
        }
        throw parameter_error("unreachable prior kind");
    }

    // density of |x0| on [support_lo, support_hi]
    double density_abs(double x) const {
        if (x < 0.0) return 0.0;
        switch (kind_) {
            case Kind::gaussian:
                return 2.0 * gauss_pdf(x / std::sqrt(p1_)) / std::sqrt(p1_);
            case Kind::power_law:
                return (x <= p2_) ? (p1_ + 1.0) * std::pow(x, p1_) / std::pow(p2_, p1_ + 1.0)
                                  : 0.0;
            case Kind::gapped:
                return (x >= p1_ && x <= p1_ + p2_) ? 1.0 / p2_ : 0.0;
        }
        return 0.0;
    }

    double support_lo() const { return kind_ == Kind::gapped ? p1_ : 0.0; }
    double support_hi() const {
        switch (kind_) {
            case Kind::gaussian: return std::numeric_limits<double>::infinity();
            case Kind::power_law: return p2_;
            case Kind::gapped: return p1_ + p2_;
        }
        return 0.0;
    }

    std::string to_string() const {
        char buf[96];
        switch (kind_) {
            case Kind::gaussian:
                std::snprintf(buf, sizeof buf, "gaussian:%.17g", p1_);
                break;
            case Kind::power_law:
                std::snprintf(buf, sizeof buf, "power_law:%.17g:%.17g", p1_, p2_);
                break;
            case Kind::gapped:
                std::snprintf(buf, sizeof buf, "gapped:%.17g:%.17g", p1_, p2_);
                break;
        }
        return buf;
    }

    // "gaussian:v", "power_law:gamma[:cutoff]", "gapped:gap:width"
    static SignalPrior parse(const std::string& text) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : text) {
            if (c == ':') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(cur);
        const auto num = [&](size_t i) {
            try {
                size_t used = 0;
                const double v = std::stod(parts.at(i), &used);
                if (used != parts[i].size()) throw parameter_error("bad prior parameter: " + parts[i]);
                return v;
            } catch (const parameter_error&) {
                throw;
            } catch (...) {
                throw parameter_error("bad prior parameter in '" + text + "'");
            }
        };
        if (parts[0] == "gaussian" && parts.size() == 2) return gaussian(num(1));
        if (parts[0] == "power_law" && parts.size() == 2) return power_law(num(1));
        if (parts[0] == "power_law" && parts.size() == 3) return power_law(num(1), num(2));
        if (parts[0] == "gapped" && parts.size() == 3) return gapped(num(1), num(2));
        throw parameter_error("unrecognized prior spec '" + text +
                              "' (want gaussian:v | power_law:gamma[:cutoff] | gapped:gap:width)");
    }

  private:
    SignalPrior(Kind k, double a, double b) : kind_(k), p1_(a), p2_(b) {}
    Kind kind_;
    double p1_, p2_;
};

// iid draws from rho*pi + (1-rho)*delta0; fixed draw order => reproducible
inline std::vector<double> sample(const SignalPrior& prior, double rho, std::size_t n,
                                  std::uint64_t rng_seed) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw parameter_error("sample requires 0 <= rho <= 1");
    if (n < 1) throw parameter_error("sample requires n >= 1");
    RngStream rng(rng_seed);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform01() >= rho) continue;
        switch (prior.kind()) {
            case SignalPrior::Kind::gaussian:
                out[i] = std::sqrt(prior.variance()) * rng.normal();
                break;
            case SignalPrior::Kind::power_law: {
                const double mag =
                    prior.cutoff() * std::pow(rng.uniform01(), 1.0 / (prior.gamma() + 1.0));
                out[i] = rng.uniform01() < 0.5 ? -mag : mag;
                break;
            }
            case SignalPrior::Kind::gapped: {
                const double mag = prior.gap() + prior.width() * rng.uniform01();
                out[i] = rng.uniform01() < 0.5 ? -mag : mag;
                break;
            }
        }
    }
    return out;
}

// [f]_av = int pi(x0) f(x0/sigma_xi) dx0, exploiting symmetry: integrate the
// |x0| density over [lo, hi] with knees of f(x/sigma_xi) as panel knots.
template <class F>
double average(const SignalPrior& prior, double sigma_xi, const F& integrand) {
    if (!(sigma_xi > 0.0)) throw parameter_error("average requires sigma_xi > 0");
    const double lo = prior.support_lo();
    const double hi = prior.kind() == SignalPrior::Kind::gaussian
                          ? 10.0 * std::sqrt(prior.variance())
                          : prior.support_hi();
    return integrate(
        [&](double x) { return prior.density_abs(x) * integrand(x / sigma_xi); }, lo, hi,
        {sigma_xi, 10.0 * sigma_xi});
}

} // namespace cavity
