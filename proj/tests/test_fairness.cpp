#include <doctest.h>

#include <cmath>

#include "fairness.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "test_data.hpp"

using namespace happymap;

namespace {

Dataset uniform_labels(std::size_t n, uint64_t seed) {
    Dataset ds;
    ds.rows = n;
    ds.dim = 1;
    ds.features.resize(n);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.features[i] = rng::uniform(seed, i, 0, 0);
        ds.labels[i] = rng::uniform(seed, i, 0, 1);
    }
    ds.feature_names = {"0"};
    ds.validate();
    return ds;
}

double coverage_of(const std::vector<double>& preds, const Dataset& ds) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < ds.rows; ++i)
        if (preds[i] <= ds.y(i)) ++c;
    return static_cast<double>(c) / static_cast<double>(ds.rows);
}

} // namespace

TEST_CASE("projection interval from labels widens by one range") {
    Dataset ds = uniform_labels(100, 80);
    for (std::size_t i = 0; i < ds.rows; ++i) ds.labels[i] = 3.0; // constant labels
    const ProjectionInterval p = label_range_proj(ds);
    CHECK(p.lo == 2.0);
    CHECK(p.hi == 4.0);
    Dataset u = uniform_labels(10000, 80);
    const ProjectionInterval q = label_range_proj(u);
    CHECK(q.lo < 0.0);
    CHECK(q.hi > 1.0);
    CHECK(q.hi - q.lo > 2.0 * 0.9);
}

TEST_CASE("one-sided bound finds the marginal quantile of uniform labels") {
    Dataset ds = uniform_labels(100000, 81);
    FitConfig cfg;
    cfg.alpha = 0.01;
    FitResult res = fit_lower_bound(0.1, ds, make_constant_family(), cfg,
                                    InitialPredictor::constant(0.5), 1.0);
    REQUIRE(res.report.status == FitStatus::Converged);
    // Constant chain: the fitted value approximates the 0.1-quantile of U(0,1).
    const double l = res.fitted_values[0];
    CHECK(std::fabs(l - 0.1) <= 0.02);
    const auto preds = res.chain.predict_batch(ds);
    CHECK(std::fabs(coverage_of(preds, ds) - 0.9) <= cfg.alpha + 0.005);
}

TEST_CASE("oracle-quantile start converges immediately with correct coverage") {
    SynthOutput out = gen_hetero(50000, 2, 82);
    const Dataset& ds = out.data;
    const double delta = 0.1;
    // The hetero oracle quantile is linear in (x0, x1).
    const double z = normal_quantile(delta);
    InitialPredictor f0;
    f0.kind = InitialPredictor::Kind::Linear;
    f0.weights = {1.0, 0.2 * z};
    f0.offset = 0.1 * z;
    FitConfig cfg;
    cfg.alpha = 0.01;
    FitResult res = fit_lower_bound(delta, ds, make_constant_family(), cfg, f0,
                                    oracle::density_bound(out.oracle));
    CHECK(res.report.status == FitStatus::Converged);
    CHECK(res.chain.steps.size() <= 3);
    const auto preds = res.chain.predict_batch(ds);
    const double n = static_cast<double>(ds.rows);
    CHECK(std::fabs(coverage_of(preds, ds) - 0.9) <=
          cfg.alpha + 3.0 * std::sqrt(delta * (1.0 - delta) / n));
}

TEST_CASE("delta = 1/2 with symmetric noise tracks the median") {
    SynthOutput out = gen_hetero(50000, 2, 83);
    FitConfig cfg;
    cfg.alpha = 0.01;
    FitResult res = fit_lower_bound(0.5, out.data, make_constant_family(), cfg,
                                    InitialPredictor::constant(0.0),
                                    oracle::density_bound(out.oracle));
    REQUIRE(res.report.status == FitStatus::Converged);
    // Marginal median of x0 + sigma(x)*eps is 0.5 by symmetry.
    CHECK(std::fabs(res.fitted_values[0] - 0.5) <= 0.02);
}

TEST_CASE("two-sided interval on uniform labels") {
    Dataset ds = uniform_labels(100000, 84);
    FitConfig cfg;
    cfg.alpha = 0.01;
    TwoSidedResult res = fit_two_sided(0.2, ds, make_constant_family(), cfg, 1.0);
    REQUIRE(res.interval.lower.has_value());
    REQUIRE(res.interval.upper.has_value());
    const auto lo = res.interval.lower->predict_batch(ds);
    const auto hi = res.interval.upper->predict_batch(ds);
    CHECK(std::fabs(lo[0] - 0.1) <= 0.03);
    CHECK(std::fabs(hi[0] - 0.9) <= 0.03);
    CHECK(std::fabs((hi[0] - lo[0]) - 0.8) <= 0.05);
    CHECK(res.crossing_fraction == 0.0);

    // Interval coverage deviates from 1 - delta by at most the two one-sided
    // alphas (plus nothing: identity on indicator algebra).
    std::size_t covered = 0;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        const bool in = lo[i] <= ds.y(i) && ds.y(i) <= hi[i];
        const bool decomposed = (lo[i] <= ds.y(i)) && !(hi[i] < ds.y(i));
        CHECK(in == decomposed);
        if (in) ++covered;
    }
    const double cov = static_cast<double>(covered) / static_cast<double>(ds.rows);
    CHECK(std::fabs(cov - 0.8) <= 2.0 * cfg.alpha + 0.005);
}

TEST_CASE("two-sided interval is symmetric for symmetric noise") {
    SynthOutput out = gen_hetero(40000, 2, 85);
    FitConfig cfg;
    cfg.alpha = 0.02;
    TwoSidedResult res =
        fit_two_sided(0.2, out.data, make_constant_family(), cfg, oracle::density_bound(out.oracle));
    const auto lo = res.interval.lower->predict_batch(out.data);
    const auto hi = res.interval.upper->predict_batch(out.data);
    // Marginal label distribution is symmetric about 1/2.
    CHECK(std::fabs((lo[0] + hi[0]) / 2.0 - 0.5) <= 0.03);
}

TEST_CASE("score interval recovers the half-normal threshold") {
    // y = x0 + eps with unit Gaussian noise; score |y - x0| at delta = 0.1
    // needs the 0.9-quantile of |N(0,1)| = 1.6449.
    const std::size_t n = 40000;
    Dataset ds;
    ds.rows = n;
    ds.dim = 1;
    ds.features.resize(n);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.features[i] = rng::uniform(86, i, 0, 0);
        ds.labels[i] = ds.features[i] + rng::normal(86, i, 0, 1);
    }
    ds.feature_names = {"0"};
    ds.validate();

    InitialPredictor h;
    h.kind = InitialPredictor::Kind::Column;
    h.column = 0;
    FitConfig cfg;
    cfg.alpha = 0.01;
    const double kp = 2.0 / std::sqrt(2.0 * M_PI); // half-normal density bound
    ScoreIntervalResult res = fit_score_interval(0.1, ds, h, make_constant_family(), cfg, kp);
    REQUIRE(res.interval.threshold.has_value());
    const double q = res.interval.threshold->predict(RowView{ds.x(0), {}});
    CHECK(q == doctest::Approx(1.6449).epsilon(0.03));

    // Membership equivalence holds on every row, and q = 0 collapses to {h}.
    for (std::size_t i = 0; i < 500; ++i) {
        RowView row{ds.x(i), ds.g(i)};
        const double qq = res.interval.threshold->predict(row);
        const bool member = std::fabs(ds.y(i) - ds.features[i]) <= qq;
        CHECK(res.interval.covers(row, ds.y(i)) == member);
    }
    IntervalPredictor degenerate;
    degenerate.construction = IntervalPredictor::Construction::ScoreBased;
    degenerate.score_base = h;
    PredictorChain zero;
    zero.f0 = InitialPredictor::constant(0.0);
    zero.proj = {0.0, 10.0};
    zero.n_features = 1;
    degenerate.threshold = zero;
    RowView row{ds.x(0), {}};
    CHECK(degenerate.covers(row, ds.features[0]));
    CHECK_FALSE(degenerate.covers(row, ds.features[0] + 0.001));
}

TEST_CASE("multivalid collapse: one bin and the all-rows group") {
    Dataset ds = uniform_labels(20000, 87);
    FitConfig cfg;
    cfg.alpha = 0.02;
    const ProjectionInterval proj = label_range_proj(ds);
    GroupPredicate all;
    all.terms.push_back(PredTerm{0, false, false, 2.0});
    all.name = "all";
    MultivalidResult mv = fit_multivalid(0.1, ds, (proj.hi - proj.lo) * 1.5, {all}, cfg,
                                         InitialPredictor::constant(0.5), 1.0);
    FitResult plain = fit_lower_bound(0.1, ds, make_constant_family(), cfg,
                                      InitialPredictor::constant(0.5), 1.0);
    REQUIRE(mv.fit.fitted_values.size() == plain.fitted_values.size());
    for (std::size_t i = 0; i < plain.fitted_values.size(); ++i)
        CHECK(mv.fit.fitted_values[i] == plain.fitted_values[i]);
}

TEST_CASE("multivalid cells stay within alpha and match a direct groupby") {
    SynthOutput out = gen_hetero(30000, 2, 88);
    Dataset ds = gen_groups(out.data, {{1, false, 0.5, "lo"}, {1, true, 0.5, "hi"}}, 1);
    const double delta = 0.1, alpha = 0.05;
    FitConfig cfg;
    cfg.alpha = alpha;
    const ProjectionInterval proj = label_range_proj(ds);
    const double lambda = (proj.hi - proj.lo) / 4.0;
    auto base = group_predicates_from_columns(ds);
    MultivalidResult mv = fit_multivalid(delta, ds, lambda, base, cfg,
                                         InitialPredictor::constant(label_quantile(ds, delta)),
                                         oracle::density_bound(out.oracle));
    REQUIRE(mv.fit.report.status == FitStatus::Converged);

    const auto preds = mv.fit.chain.predict_batch(ds);
    const auto cells = coverage_cells(preds, ds, delta, base, lambda, proj);
    for (const auto& c : cells) {
        if (c.group_id == "all") continue;
        CHECK(std::fabs(c.mass_weighted) <= alpha + 1e-9);
    }

    // Cross-check every (group, bin) cell against a direct recomputation.
    for (std::size_t g = 0; g < base.size(); ++g) {
        for (int b = 0; b < 4; ++b) {
            std::size_t n = 0, cov = 0;
            for (std::size_t i = 0; i < ds.rows; ++i) {
                RowView row{ds.x(i), ds.g(i)};
                if (!base[g].terms[0].eval(row)) continue;
                int bin = static_cast<int>((preds[i] - proj.lo) / lambda);
                if (bin > 3) bin = 3;
                if (bin != b) continue;
                ++n;
                if (preds[i] <= ds.y(i)) ++cov;
            }
            // Table layout: marginal block first, then groups in order.
            const auto& cell = cells[(g + 1) * 4 + static_cast<std::size_t>(b)];
            CHECK(cell.n == n);
            if (n > 0)
                CHECK(cell.coverage ==
                      doctest::Approx(static_cast<double>(cov) / static_cast<double>(n))
                          .epsilon(1e-12));
        }
    }
}

TEST_CASE("cellwise coverage equals direct groupby recomputation") {
    SynthOutput out = gen_hetero(10000, 2, 89);
    Dataset ds = gen_groups(out.data, {{0, false, 0.4, "a"}, {1, true, 0.6, "b"}}, 1);
    std::vector<double> preds(ds.rows);
    for (std::size_t i = 0; i < ds.rows; ++i) preds[i] = 0.2 + 0.3 * ds.x(i)[0];
    const auto groups = group_predicates_from_columns(ds);
    const auto cells = coverage_cells(preds, ds, 0.1, groups, 0.0, ProjectionInterval{0.0, 1.0});
    REQUIRE(cells.size() == 3); // marginal + 2 groups
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto direct = oracles::groupby_coverage(preds, ds, groups[g].terms);
        CHECK(cells[g + 1].n == direct.n);
        CHECK(cells[g + 1].coverage == doctest::Approx(direct.coverage).epsilon(1e-12));
    }
}

TEST_CASE("no-harm: perfect start stays put, noisy start stays bounded") {
    SynthOutput out = gen_hetero(20000, 2, 90);
    FitConfig cfg;
    cfg.alpha = 0.02;
    GroupPredicate lo, hi;
    lo.terms.push_back(PredTerm{1, false, false, 0.5});
    lo.name = "lo";
    hi.terms.push_back(PredTerm{1, false, true, 0.5});
    hi.name = "hi";

    NoHarmResult clean = no_harm_eval(out.data, out.oracle, 0.0, 0.1, "groups", {lo, hi}, cfg,
                                      oracle::density_bound(out.oracle));
    CHECK(clean.mse_init == 0.0);
    CHECK(clean.mse_final <= 1e-4);

    NoHarmResult noisy = no_harm_eval(out.data, out.oracle, 0.1, 0.1, "groups", {lo, hi}, cfg,
                                      oracle::density_bound(out.oracle));
    CHECK(noisy.mse_init == doctest::Approx(0.01).epsilon(0.1));
    CHECK(noisy.ratio <= 10.0);

    // The reported mse matches an independent recomputation.
    double acc = 0.0;
    for (std::size_t i = 0; i < out.data.rows; ++i) {
        const double l_star = oracle::cond_quantile(out.oracle, 0.1, out.data.x(i));
        const double d = noisy.fit.fitted_values[i] - l_star;
        acc += d * d;
    }
    CHECK(noisy.mse_final ==
          doctest::Approx(acc / static_cast<double>(out.data.rows)).epsilon(1e-9));
}
