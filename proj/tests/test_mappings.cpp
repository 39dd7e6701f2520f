#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mappings.hpp"
#include "oracles.hpp"
#include "util.hpp"

using namespace happymap;

namespace {

Mapping quantile(double delta, double kp = 10.0) {
    Mapping m;
    m.id = MappingId::Quantile;
    m.delta = delta;
    m.density_bound = kp;
    return m;
}

Mapping moment(int k) {
    Mapping m;
    m.id = MappingId::RawMoment;
    m.k = k;
    return m;
}

} // namespace

TEST_CASE("residual mapping arithmetic") {
    Mapping m;
    CHECK(m.s(0.7, 1.0) == doctest::Approx(-0.3));
    CHECK(m.potential(0.7, 1.0) == doctest::Approx(0.045));
    CHECK(m.s(0.42, 0.42) == 0.0);
    CHECK(m.potential(0.42, 0.42) == 0.0);
    CHECK(m.kappa() == 0.5);
}

TEST_CASE("residual potential derivative matches s (finite differences)") {
    Mapping m;
    oracles::TestRng rng(21);
    for (int i = 0; i < 200; ++i) {
        const double f = rng.uniform(-2, 2), y = rng.uniform(-2, 2);
        CHECK(oracles::finite_diff(m, f, y, 1e-4) == doctest::Approx(m.s(f, y)).epsilon(1e-6));
    }
}

TEST_CASE("quantile mapping arithmetic") {
    Mapping m = quantile(0.1);
    CHECK(m.s(2.0, 3.0) == doctest::Approx(-0.1));
    CHECK(m.potential(2.0, 3.0) == doctest::Approx(2.8));
    CHECK(m.s(4.0, 3.0) == doctest::Approx(0.9));
    CHECK(m.potential(4.0, 3.0) == doctest::Approx(3.6));
    CHECK(m.kappa() == 10.0);
    CHECK_THROWS_AS(Mapping::parse("quantile:1.5"), Error);
    CHECK_THROWS_AS(Mapping::parse("quantile:0"), Error);
}

TEST_CASE("quantile potential minimizer sits at the Gaussian quantile") {
    // Grid search over the mean pinball potential, 1e5 standard normal samples.
    const std::size_t n = 100000;
    std::vector<double> ys(n);
    oracles::TestRng rng(22);
    for (auto& y : ys) y = rng.normal();
    std::sort(ys.begin(), ys.end());
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + ys[i];

    const double delta = 0.1;
    // mean L(l) = (1-delta)*l + mean((y-l) 1{y>l})
    auto mean_potential = [&](double l) {
        const auto it = std::upper_bound(ys.begin(), ys.end(), l);
        const std::size_t k = static_cast<std::size_t>(it - ys.begin());
        const double tail_sum = suffix[k] - static_cast<double>(n - k) * l;
        return (1.0 - delta) * l + tail_sum / static_cast<double>(n);
    };
    double best_l = -3.0, best_v = kInf;
    for (double l = -3.0; l <= 3.0; l += 1e-3) {
        const double v = mean_potential(l);
        if (v < best_v) {
            best_v = v;
            best_l = l;
        }
    }
    CHECK(best_l == doctest::Approx(normal_quantile(delta)).epsilon(0.02));
}

TEST_CASE("quantile subgradient identity away from the kink") {
    // Dyadic inputs keep the arithmetic exact.
    Mapping m = quantile(0.25);
    double fd = (m.potential(2.5, 1.0) - m.potential(1.5, 1.0)) / 1.0;
    CHECK(fd == m.s(2.0, 1.0)); // l > y: exactly 1-delta
    fd = (m.potential(1.5, 2.0) - m.potential(0.5, 2.0)) / 1.0;
    CHECK(fd == m.s(1.0, 2.0)); // l < y: exactly -delta
    // Random inputs, h < |l-y|.
    oracles::TestRng rng(23);
    Mapping mq = quantile(0.37);
    for (int i = 0; i < 200; ++i) {
        const double l = rng.uniform(-2, 2), y = rng.uniform(-2, 2);
        if (std::fabs(l - y) < 1e-3) continue;
        const double h = 0.5 * std::fabs(l - y);
        CHECK(oracles::finite_diff(mq, l, y, h) == doctest::Approx(mq.s(l, y)).epsilon(1e-9));
    }
}

TEST_CASE("quantile constant-auditor identity") {
    oracles::TestRng rng(24);
    Mapping m = quantile(0.2);
    const std::size_t n = 5000;
    double mean_s = 0.0;
    std::size_t below = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
        mean_s += m.s(l, y);
        if (l <= y) ++below;
    }
    mean_s /= static_cast<double>(n);
    const double frac = static_cast<double>(below) / static_cast<double>(n);
    CHECK(mean_s == doctest::Approx((1.0 - 0.2) - frac).epsilon(1e-12));
}

TEST_CASE("raw moment mapping") {
    CHECK(moment(1).s(0.3, 0.8) == Mapping{}.s(0.3, 0.8)); // k=1 is the residual
    CHECK(moment(2).s(0.5, 0.5) == 0.0);
    CHECK(moment(2).kappa() == 1.0);
    CHECK(moment(3).kappa() == 1.5);
    oracles::TestRng rng(25);
    for (int k : {2, 3}) {
        Mapping m = moment(k);
        for (int i = 0; i < 200; ++i) {
            const double f = rng.uniform(0.01, 0.99), y = rng.u01();
            CHECK(oracles::finite_diff(m, f, y, 1e-4) == doctest::Approx(m.s(f, y)).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(Mapping::parse("moment:0"), Error);
}

TEST_CASE("parity mapping uses the closed-form U-expectation") {
    Mapping m;
    m.id = MappingId::ParityExpected;
    CHECK(m.s(0.0, 0.0) == 0.0);
    CHECK(m.s(0.3, 123.0) == doctest::Approx(0.3)); // label independent
    CHECK(m.potential(0.3, 0.0) == doctest::Approx(0.045));
    // Monte-Carlo check of E_U[1{U < f}] = f.
    oracles::TestRng rng(26);
    const int n = 1000000;
    int hits = 0;
    for (int i = 0; i < n; ++i)
        if (rng.u01() < 0.3) ++hits;
    CHECK(static_cast<double>(hits) / n == doctest::Approx(0.3).epsilon(0.002));
}

TEST_CASE("smooth-like condition holds pointwise for differentiable mappings") {
    oracles::TestRng rng(27);
    std::vector<Mapping> maps = {Mapping{}, moment(2), moment(3)};
    Mapping parity;
    parity.id = MappingId::ParityExpected;
    maps.push_back(parity);
    for (const auto& m : maps) {
        const double kappa = m.kappa();
        for (int i = 0; i < 1000; ++i) {
            const double f = rng.u01(), ft = rng.u01(), y = rng.u01();
            const double lhs = m.potential(f, y) - m.potential(ft, y);
            const double rhs = (f - ft) * m.s(f, y) - kappa * (f - ft) * (f - ft);
            CHECK(lhs >= rhs - 1e-9);
        }
    }
}

TEST_CASE("smooth-like condition holds in expectation for the quantile mapping") {
    // y ~ N(0,1): conditional density bounded by 1/sqrt(2 pi).
    const double kp = 1.0 / std::sqrt(2.0 * M_PI);
    Mapping m = quantile(0.3, kp);
    oracles::TestRng rng(28);
    const std::size_t n = 100000;
    std::vector<double> ys(n);
    for (auto& y : ys) y = rng.normal();
    for (int pair = 0; pair < 20; ++pair) {
        const double l = rng.uniform(-1.5, 1.5);
        const double lt = l + rng.uniform(-0.5, 0.5);
        std::vector<double> diffs(n);
        for (std::size_t i = 0; i < n; ++i)
            diffs[i] = (m.potential(l, ys[i]) - m.potential(lt, ys[i])) -
                       ((l - lt) * m.s(l, ys[i]) - kp * (l - lt) * (l - lt));
        const double mu = oracles::mean(diffs);
        const double se = oracles::stdev(diffs) / std::sqrt(static_cast<double>(n));
        CHECK(mu >= -3.0 * se);
    }
}

TEST_CASE("mapping config strings parse and print") {
    CHECK(Mapping::parse("residual").id == MappingId::Residual);
    CHECK(Mapping::parse("parity").id == MappingId::ParityExpected);
    CHECK(Mapping::parse("quantile:0.1").delta == doctest::Approx(0.1));
    CHECK(Mapping::parse("moment:2").k == 2);
    CHECK(Mapping::parse("quantile:0.25").to_string() == "quantile:0.25");
    CHECK_THROWS_AS(Mapping::parse("huber"), Error);
}

TEST_CASE("potential lower bounds hold empirically") {
    oracles::TestRng rng(29);
    Mapping res, par, mom = moment(3);
    par.id = MappingId::ParityExpected;
    Mapping q = quantile(0.1);
    for (int i = 0; i < 5000; ++i) {
        const double f01 = rng.u01(), y01 = rng.u01();
        CHECK(res.potential(f01, y01) >= res.potential_lower(1.0));
        CHECK(par.potential(f01, y01) >= par.potential_lower(1.0));
        CHECK(mom.potential(f01, y01) >= mom.potential_lower(1.0));
        const double l = rng.uniform(-4, 4), y = rng.uniform(-2, 2);
        CHECK(q.potential(l, y) >= q.potential_lower(2.0) - 1e-12);
    }
}
