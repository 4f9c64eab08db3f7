#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "cavity/priors.hpp"
#include "cavity/quadrature.hpp"
#include "cavity/scalar_math.hpp"

using namespace cavity;

TEST_CASE("quadrature: gaussian density integrates to one") {
    const double v = integrate([](double x) { return gauss_pdf(x); }, -8.0, 8.0);
    CHECK(v == Catch::Approx(1.0).epsilon(1e-12));
    const double w =
        integrate([](double x) { return gauss_pdf(x) * x * x; }, -8.0, 8.0, {3.0, -1.0, 0.5});
    CHECK(w == Catch::Approx(1.0).epsilon(1e-11));
}

TEST_CASE("moments: closed forms") {
    const auto g = SignalPrior::gaussian(1.0).moments();
    CHECK(g.m1_abs == Catch::Approx(0.79788456080286541).epsilon(1e-14));
    CHECK(g.m2 == Catch::Approx(1.0).epsilon(1e-14));

    const auto u = SignalPrior::power_law(0.0, 1.0).moments();
    CHECK(u.m1_abs == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(u.m2 == Catch::Approx(1.0 / 3.0).epsilon(1e-14));

    const auto p1 = SignalPrior::power_law(1.0, 1.0).moments();
    CHECK(p1.m1_abs == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(p1.m2 == Catch::Approx(0.5).epsilon(1e-14));

    const auto gp = SignalPrior::gapped(1.0, 1.0).moments();
    CHECK(gp.m1_abs == Catch::Approx(1.5).epsilon(1e-14));
    CHECK(gp.m2 == Catch::Approx(7.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("moments: quadrature agrees with closed forms") {
    for (const auto& prior :
         {SignalPrior::gaussian(2.3), SignalPrior::power_law(0.7, 1.4),
          SignalPrior::gapped(0.6, 1.1)}) {
        const auto m = prior.moments();
        const double hi = prior.kind() == SignalPrior::Kind::gaussian
                              ? 10.0 * std::sqrt(prior.variance())
                              : prior.support_hi();
        const double m1q = integrate([&](double x) { return prior.density_abs(x) * x; },
                                     prior.support_lo(), hi);
        const double m2q = integrate([&](double x) { return prior.density_abs(x) * x * x; },
                                     prior.support_lo(), hi);
        CHECK(m1q == Catch::Approx(m.m1_abs).epsilon(1e-10));
        CHECK(m2q == Catch::Approx(m.m2).epsilon(1e-10));
        CHECK(m.m2 >= m.m1_abs * m.m1_abs);
    }
    CHECK(SignalPrior::gapped(1.0, 1.0).moments().m1_abs >= 1.0);
}

TEST_CASE("constructor and parser domain errors") {
    CHECK_THROWS_AS(SignalPrior::gaussian(0.0), parameter_error);
    CHECK_THROWS_AS(SignalPrior::gaussian(-1.0), parameter_error);
    CHECK_THROWS_AS(SignalPrior::power_law(-1.0, 1.0), parameter_error);
    CHECK_THROWS_AS(SignalPrior::power_law(0.5, 0.0), parameter_error);
    CHECK_THROWS_AS(SignalPrior::gapped(0.0, 1.0), parameter_error);
    CHECK_THROWS_AS(SignalPrior::gapped(1.0, 0.0), parameter_error);
    CHECK_THROWS_AS(SignalPrior::parse("cauchy:1"), parameter_error);
    CHECK_THROWS_AS(SignalPrior::parse("gaussian:one"), parameter_error);
    CHECK_THROWS_AS(SignalPrior::parse("gapped:1"), parameter_error);
}

TEST_CASE("parse round-trips") {
    for (const auto& text : {"gaussian:1", "power_law:0.5:2", "power_law:1", "gapped:1:1"}) {
        const auto p = SignalPrior::parse(text);
        const auto q = SignalPrior::parse(p.to_string());
        CHECK(p.kind() == q.kind());
        CHECK(p.moments().m1_abs == Catch::Approx(q.moments().m1_abs).epsilon(1e-15));
        CHECK(p.moments().m2 == Catch::Approx(q.moments().m2).epsilon(1e-15));
    }
    CHECK(SignalPrior::parse("power_law:1").cutoff() == 1.0);
    CHECK(SignalPrior::parse("power_law:1:1").scale_f() == Catch::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sample: delta mass, support, and moments") {
    const auto g = SignalPrior::gaussian(1.0);

    const auto zeros = sample(g, 0.0, 100, 7);
    for (double x : zeros) CHECK(x == 0.0);

    const auto xs = sample(g, 1.0, 100000, 12345);
    double m2 = 0.0;
    for (double x : xs) m2 += x * x;
    m2 /= xs.size();
    CHECK(std::fabs(m2 - 1.0) < 3.0 * std::sqrt(2.0 / xs.size()));

    const auto gs = sample(SignalPrior::gapped(1.0, 1.0), 1.0, 10000, 99);
    double lo = 1e300, hi = 0.0;
    for (double x : gs) {
        lo = std::min(lo, std::fabs(x));
        hi = std::max(hi, std::fabs(x));
    }
    CHECK(lo >= 1.0);
    CHECK(hi <= 2.0);

    std::size_t nz = 0;
    const auto sp = sample(SignalPrior::power_law(1.0, 1.0), 0.3, 100000, 4242);
    for (double x : sp)
        if (x != 0.0) ++nz;
    const double frac = double(nz) / sp.size();
    CHECK(std::fabs(frac - 0.3) < 3.0 * std::sqrt(0.3 * 0.7 / sp.size()));

    CHECK_THROWS_AS(sample(g, -0.1, 10, 1), parameter_error);
    CHECK_THROWS_AS(sample(g, 1.1, 10, 1), parameter_error);
}

TEST_CASE("sample: deterministic in the seed") {
    const auto p = SignalPrior::power_law(0.0, 1.0);
    const auto a = sample(p, 0.4, 5000, 2024);
    const auto b = sample(p, 0.4, 5000, 2024);
    const auto c = sample(p, 0.4, 5000, 2025);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("average: normalization and change of variables") {
    const auto one = [](double) { return 1.0; };
    CHECK(average(SignalPrior::gaussian(1.7), 0.3, one) == Catch::Approx(1.0).epsilon(1e-10));
    CHECK(average(SignalPrior::power_law(0.8, 1.2), 0.05, one) ==
          Catch::Approx(1.0).epsilon(1e-10));
    CHECK(average(SignalPrior::gapped(1.0, 0.5), 0.2, one) == Catch::Approx(1.0).epsilon(1e-10));

    for (double v : {1.0, 2.3}) {
        const double sx = 0.37;
        const double got = average(SignalPrior::gaussian(v), sx,
                                   [](double t0) { return t0 * t0; });
        CHECK(got == Catch::Approx(v / (sx * sx)).epsilon(1e-9));
    }

    CHECK_THROWS_AS(average(SignalPrior::gaussian(1.0), 0.0, one), parameter_error);
}

TEST_CASE("average: pinned values") {
    const double a1 = average(SignalPrior::gaussian(1.0), 0.1,
                              [](double t0) { return psi_theta(t0, 1.0); });
    CHECK(a1 == Catch::Approx(0.079261664795577252).epsilon(1e-9));

    const double a2 = average(SignalPrior::gapped(1.0, 1.0), 0.3,
                              [](double t0) { return channel_mse_nonzero(t0, 0.8, 1.2); });
    CHECK(a2 == Catch::Approx(2.9691355110347848).epsilon(1e-9));

    const double a3 = average(SignalPrior::power_law(1.0, 1.0), 0.05,
                              [](double t0) { return psi_xi(t0, 0.7); });
    CHECK(a3 == Catch::Approx(0.0069867057470615638).epsilon(1e-9));
}

TEST_CASE("average: agrees with direct Monte Carlo") {
    const auto prior = SignalPrior::gaussian(1.0);
    const double sigma_xi = 0.1, tau = 1.0;
    const double exact = average(prior, sigma_xi, [&](double t0) { return psi_theta(t0, tau); });

    RngStream rng(777);
    const std::size_t n = 10000000;
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = psi_theta(std::fabs(rng.normal()) / sigma_xi, tau);
        acc += f;
        acc2 += f * f;
    }
    const double mean = acc / n;
    const double stderr_ = std::sqrt((acc2 / n - mean * mean) / n);
    CHECK(std::fabs(mean - exact) < 3.0 * stderr_);
}

TEST_CASE("average: small-sigma_xi power-law scaling") {
    for (double gamma : {0.0, 1.0}) {
        const auto prior = SignalPrior::power_law(gamma, 1.0);
        const auto law = [&](double sx) {
            return average(prior, sx, [](double t0) { return psi_xi(t0, 1.0); }) /
                   std::pow(sx, gamma + 1.0);
        };
        const double r = law(1e-2) / law(1e-3);
        CHECK(std::fabs(r - 1.0) < 0.05);
    }
}

TEST_CASE("average: gapped prior decays exponentially in 1/sigma_xi^2") {
    const auto prior = SignalPrior::gapped(1.0, 1.0);
    std::vector<double> inv_sx2, log_avg;
    for (double sx : {0.35, 0.3, 0.25, 0.2}) {
        const double a = average(prior, sx, [](double t0) { return psi_xi(t0, 1.0); });
        REQUIRE(a > 0.0);
        inv_sx2.push_back(1.0 / (sx * sx));
        log_avg.push_back(std::log(a));
    }
    // least squares of log(avg) on 1/sx^2
    const std::size_t n = inv_sx2.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += inv_sx2[i];
        sy += log_avg[i];
        sxx += inv_sx2[i] * inv_sx2[i];
        sxy += inv_sx2[i] * log_avg[i];
        syy += log_avg[i] * log_avg[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double r2 = (n * sxy - sx * sy) * (n * sxy - sx * sy) /
                      ((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(slope < 0.0);
    CHECK(r2 > 0.99);
}
