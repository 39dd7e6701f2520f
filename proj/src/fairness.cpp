#include "fairness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rng.hpp"

namespace happymap {

ProjectionInterval label_range_proj(const Dataset& ds) {
    if (!ds.has_labels()) fail(ErrorCode::InvalidArgument, "quantile fit requires labels");
    double lo = kInf, hi = -kInf;
    for (double y : ds.labels) {
        if (!std::isfinite(y)) fail(ErrorCode::InvalidArgument, "labels must be finite");
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    double range = hi - lo;
    if (range == 0.0) range = 1.0;
    return ProjectionInterval{lo - range, hi + range};
}

double label_quantile(const Dataset& ds, double level) {
    if (!ds.has_labels()) fail(ErrorCode::InvalidArgument, "label quantile requires labels");
    std::vector<double> ys = ds.labels;
    std::sort(ys.begin(), ys.end());
    double idx = level * static_cast<double>(ys.size() - 1);
    if (idx < 0) idx = 0;
    if (idx > static_cast<double>(ys.size() - 1)) idx = static_cast<double>(ys.size() - 1);
    return ys[static_cast<std::size_t>(idx)];
}

FitResult fit_lower_bound(double delta, const Dataset& ds, const AuditorFamily& family,
                          const FitConfig& config, const InitialPredictor& f0,
                          double density_bound, std::optional<ProjectionInterval> proj) {
    if (!(delta > 0.0 && delta < 1.0))
        fail(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    Mapping mapping;
    mapping.id = MappingId::Quantile;
    mapping.delta = delta;
    mapping.density_bound = density_bound;
    const ProjectionInterval p = proj ? *proj : label_range_proj(ds);
    return fit(config, ds, family, mapping, f0, p);
}

TwoSidedResult fit_two_sided(double delta, const Dataset& ds, const AuditorFamily& family,
                             const FitConfig& config, double density_bound,
                             std::optional<InitialPredictor> f0_lower,
                             std::optional<InitialPredictor> f0_upper) {
    if (!(delta > 0.0 && delta < 1.0))
        fail(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    const ProjectionInterval proj = label_range_proj(ds);
    const InitialPredictor lo0 =
        f0_lower ? *f0_lower : InitialPredictor::constant(label_quantile(ds, delta / 2.0));
    const InitialPredictor hi0 =
        f0_upper ? *f0_upper : InitialPredictor::constant(label_quantile(ds, 1.0 - delta / 2.0));

    TwoSidedResult out;
    out.lower_fit = fit_lower_bound(delta / 2.0, ds, family, config, lo0, density_bound, proj);
    out.upper_fit =
        fit_lower_bound(1.0 - delta / 2.0, ds, family, config, hi0, density_bound, proj);

    out.interval.construction = IntervalPredictor::Construction::TwoChains;
    out.interval.lower = out.lower_fit.chain;
    out.interval.upper = out.upper_fit.chain;
    out.interval.meta = {{"delta", delta},
                         {"cutoffs", {delta / 2.0, 1.0 - delta / 2.0}},
                         {"family_members", family.members.size()},
                         {"family_b_bound", family.b_bound}};

    std::size_t crossed = 0;
    for (std::size_t i = 0; i < ds.rows; ++i)
        if (out.lower_fit.fitted_values[i] > out.upper_fit.fitted_values[i]) ++crossed;
    out.crossing_fraction = static_cast<double>(crossed) / static_cast<double>(ds.rows);
    if (out.crossing_fraction > 0.05)
        out.warnings.push_back("quantile chains cross on " +
                               format_real_fixed(100.0 * out.crossing_fraction, 2) +
                               "% of training rows");
    return out;
}

ScoreIntervalResult fit_score_interval(double delta, const Dataset& ds,
                                       const InitialPredictor& score_base,
                                       const AuditorFamily& family, const FitConfig& config,
                                       double density_bound) {
    if (!(delta > 0.0 && delta < 1.0))
        fail(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    if (!ds.has_labels()) fail(ErrorCode::InvalidArgument, "score interval requires labels");

    Dataset scored = ds;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        const double h = score_base.eval(RowView{ds.x(i), ds.g(i)});
        scored.labels[i] = std::fabs(ds.y(i) - h);
    }
    // P(score <= q) tracks 1-delta, so fit the threshold at level 1-delta.
    const InitialPredictor q0 = InitialPredictor::constant(label_quantile(scored, 1.0 - delta));
    FitResult thr = fit_lower_bound(1.0 - delta, scored, family, config, q0, density_bound);

    ScoreIntervalResult out;
    out.interval.construction = IntervalPredictor::Construction::ScoreBased;
    out.interval.score_base = score_base;
    out.interval.threshold = thr.chain;
    out.interval.meta = {{"delta", delta},
                         {"score", "abs-residual"},
                         {"family_members", family.members.size()}};
    out.report = thr.report;

    // Inverter spot-check: membership through the interval must agree with
    // the score comparison on sampled rows.
    const std::size_t sample = std::min<std::size_t>(100, ds.rows);
    for (std::size_t k = 0; k < sample; ++k) {
        const std::size_t i = (k * 7919) % ds.rows;
        RowView row{ds.x(i), ds.g(i)};
        const double q = out.interval.threshold->predict(row);
        const double score = std::fabs(ds.y(i) - score_base.eval(row));
        auto [lo, hi] = out.interval.interval(row);
        const bool in_interval = lo <= ds.y(i) && ds.y(i) <= hi;
        if (in_interval != (score <= q))
            fail(ErrorCode::Internal, "score inverter inconsistent with membership");
    }
    return out;
}

MultivalidResult fit_multivalid(double delta, const Dataset& ds, double lambda,
                                const std::vector<GroupPredicate>& base_groups,
                                const FitConfig& config, const InitialPredictor& f0,
                                double density_bound) {
    if (!(lambda > 0.0)) fail(ErrorCode::InvalidArgument, "bin width must be positive");
    const ProjectionInterval proj = label_range_proj(ds);
    AuditorFamily family = make_multivalidity_family(lambda, proj.lo, proj.hi, base_groups);
    MultivalidResult out;
    out.fit = fit_lower_bound(delta, ds, family, config, f0, density_bound, proj);
    out.lambda = lambda;
    out.base_groups = base_groups;
    return out;
}

NoHarmResult no_harm_eval(const Dataset& ds, const nlohmann::json& oracle, double sigma_init,
                          double delta, const std::string& family_kind,
                          const std::vector<GroupPredicate>& groups, const FitConfig& config,
                          double density_bound) {
    if (sigma_init < 0.0) fail(ErrorCode::InvalidArgument, "sigma_init must be nonnegative");

    // Append the noisy oracle-quantile column so the chain stays replayable.
    Dataset aug = ds;
    aug.dim = ds.dim + 1;
    aug.features.assign(aug.rows * aug.dim, 0.0);
    std::vector<double> l_star(ds.rows);
    for (std::size_t i = 0; i < ds.rows; ++i) {
        for (std::size_t j = 0; j < ds.dim; ++j)
            aug.features[i * aug.dim + j] = ds.features[i * ds.dim + j];
        l_star[i] = oracle::cond_quantile(oracle, delta, ds.x(i));
        const double noise = sigma_init == 0.0 ? 0.0 : sigma_init * rng::normal(config.seed, i, 0, 7);
        aug.features[i * aug.dim + ds.dim] = l_star[i] + noise;
    }
    aug.feature_names = ds.feature_names;
    aug.feature_names.push_back("f0init");
    aug.validate();

    InitialPredictor f0;
    f0.kind = InitialPredictor::Kind::Column;
    f0.column = static_cast<int>(ds.dim);

    AuditorFamily family;
    if (family_kind == "constant") family = make_constant_family();
    else if (family_kind == "groups") family = make_group_family(aug, groups, 1, false);
    else fail(ErrorCode::InvalidArgument, "no-harm family must be constant or groups");

    NoHarmResult out;
    out.fit = fit_lower_bound(delta, aug, family, config, f0, density_bound);

    double mse0 = 0.0, mse1 = 0.0;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        const double d0 = aug.features[i * aug.dim + ds.dim] - l_star[i];
        const double d1 = out.fit.fitted_values[i] - l_star[i];
        mse0 += d0 * d0;
        mse1 += d1 * d1;
    }
    out.mse_init = mse0 / static_cast<double>(ds.rows);
    out.mse_final = mse1 / static_cast<double>(ds.rows);
    out.ratio = out.mse_init > 0.0 ? out.mse_final / out.mse_init
                                   : (out.mse_final > 1e-12 ? kInf : 0.0);
    out.augmented = std::move(aug);
    return out;
}

std::vector<CellCoverage> coverage_cells(const std::vector<double>& predictions,
                                         const Dataset& ds, double delta,
                                         const std::vector<GroupPredicate>& groups,
                                         double bin_lambda, const ProjectionInterval& bin_range) {
    if (predictions.size() != ds.rows)
        fail(ErrorCode::InvalidArgument, "coverage: predictions not aligned with rows");
    if (!ds.has_labels()) fail(ErrorCode::InvalidArgument, "coverage requires labels");

    struct Key {
        int group;
        int bin;
    };
    std::size_t n_bins = 0;
    if (bin_lambda > 0.0)
        n_bins = static_cast<std::size_t>(
            std::max(1.0, std::ceil((bin_range.hi - bin_range.lo) / bin_lambda)));

    auto bin_of = [&](double v) -> int {
        if (n_bins == 0) return -1;
        if (v <= bin_range.lo) return 0;
        int b = static_cast<int>((v - bin_range.lo) / bin_lambda);
        if (b >= static_cast<int>(n_bins)) b = static_cast<int>(n_bins) - 1;
        return b;
    };
    auto bin_label = [&](int b) -> std::string {
        if (b < 0) return "all";
        const double lo = bin_range.lo + b * bin_lambda;
        const double hi = b + 1 == static_cast<int>(n_bins) ? bin_range.hi : lo + bin_lambda;
        return "[" + format_real_fixed(lo, 4) + "," + format_real_fixed(hi, 4) +
               (b + 1 == static_cast<int>(n_bins) ? "]" : ")");
    };

    const int n_group_ids = static_cast<int>(groups.size());
    const int bins_per_group = n_bins == 0 ? 1 : static_cast<int>(n_bins);
    // cell (g, b): g = -1 marginal, groups indexed from 0
    std::vector<std::size_t> count(static_cast<std::size_t>((n_group_ids + 1) * bins_per_group), 0);
    std::vector<std::size_t> covered(count.size(), 0);

    const double target = 1.0 - delta;
    for (std::size_t i = 0; i < ds.rows; ++i) {
        RowView row{ds.x(i), ds.g(i)};
        const bool cov = predictions[i] <= ds.y(i);
        const int b = n_bins == 0 ? 0 : bin_of(predictions[i]);
        auto cell = [&](int g) {
            const std::size_t idx =
                static_cast<std::size_t>(g + 1) * static_cast<std::size_t>(bins_per_group) +
                static_cast<std::size_t>(b);
            count[idx] += 1;
            if (cov) covered[idx] += 1;
        };
        cell(-1);
        for (int g = 0; g < n_group_ids; ++g) {
            bool in = true;
            for (const auto& t : groups[static_cast<std::size_t>(g)].terms)
                if (!t.eval(row)) { in = false; break; }
            if (in) cell(g);
        }
    }

    std::vector<CellCoverage> cells;
    for (int g = -1; g < n_group_ids; ++g) {
        for (int b = 0; b < bins_per_group; ++b) {
            const std::size_t idx =
                static_cast<std::size_t>(g + 1) * static_cast<std::size_t>(bins_per_group) +
                static_cast<std::size_t>(b);
            CellCoverage c;
            c.group_id = g < 0 ? "all" : groups[static_cast<std::size_t>(g)].name;
            c.bin_id = n_bins == 0 ? "all" : bin_label(b);
            c.n = count[idx];
            if (c.n > 0) {
                c.coverage = static_cast<double>(covered[idx]) / static_cast<double>(c.n);
                c.deviation = c.coverage - target;
                c.mass_weighted =
                    (static_cast<double>(c.n) / static_cast<double>(ds.rows)) * c.deviation;
                c.se = std::sqrt(c.coverage * (1.0 - c.coverage) / static_cast<double>(c.n));
            }
            cells.push_back(std::move(c));
        }
    }
    return cells;
}

std::string coverage_csv(const std::vector<CellCoverage>& cells) {
    std::ostringstream os;
    os << "group_id,bin_id,n,coverage,deviation,mass_weighted_deviation,se\n";
    for (const auto& c : cells) {
        os << "\"" << c.group_id << "\",\"" << c.bin_id << "\"," << c.n << ","
           << format_real(c.coverage) << "," << format_real(c.deviation) << ","
           << format_real(c.mass_weighted) << "," << format_real(c.se) << "\n";
    }
    return os.str();
}

} // namespace happymap
