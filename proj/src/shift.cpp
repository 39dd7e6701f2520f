#include "shift.hpp"

#include <cmath>

namespace happymap {

std::vector<std::size_t> domain_rows(const Dataset& ds, int tag) {
    if (!ds.has_domain()) fail(ErrorCode::InvalidArgument, "dataset has no z domain column");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.rows; ++i)
        if (ds.domain[i] == tag) rows.push_back(i);
    return rows;
}

UniversalL2Result fit_universal_l2(const Dataset& ds,
                                   const std::vector<std::vector<double>>& theta_grid,
                                   const std::vector<InitialPredictor>& p_list, double clamp_lo,
                                   double clamp_hi, const FitConfig& config,
                                   const InitialPredictor& f0, const nlohmann::json* oracle) {
    const std::vector<std::size_t> source = domain_rows(ds, 0);
    const std::vector<std::size_t> target = domain_rows(ds, 1);
    if (source.empty()) fail(ErrorCode::InvalidArgument, "no source rows to fit on");
    for (std::size_t i : source) {
        const double y = ds.y(i);
        if (!(y >= 0.0 && y <= 1.0))
            fail(ErrorCode::InvalidArgument, "universal-l2 requires source labels in [0,1]");
    }

    AuditorFamily family = make_shift_composite_family(theta_grid, p_list, clamp_lo, clamp_hi, &ds);
    Mapping mapping; // residual
    const ProjectionInterval proj{0.0, 1.0};
    UniversalL2Result out;
    out.fit = fit(config, ds, family, mapping, f0, proj, source);

    if (!target.empty()) {
        const std::vector<double> preds = out.fit.chain.predict_batch(ds);
        double mse_b = 0.0, mse_b0 = 0.0, mse_y = 0.0;
        for (std::size_t i : target) {
            RowView row{ds.x(i), ds.g(i)};
            const double f = preds[i];
            const double f0v = proj.clamp(f0.eval(row));
            const double y = ds.y(i);
            mse_y += (f - y) * (f - y);
            if (oracle) {
                const double bayes = oracle::cond_mean(*oracle, ds.x(i));
                mse_b += (f - bayes) * (f - bayes);
                mse_b0 += (f0v - bayes) * (f0v - bayes);
            }
        }
        const double nt = static_cast<double>(target.size());
        out.n_target = target.size();
        out.target_mse_label = mse_y / nt;
        if (oracle) {
            out.target_mse_bayes = mse_b / nt;
            out.baseline_mse_bayes = mse_b0 / nt;
        }
    }
    return out;
}

ShiftConformalResult fit_shift_conformal(double delta, const Dataset& ds,
                                         const std::vector<std::vector<double>>& theta_grid,
                                         double clamp_lo, double clamp_hi,
                                         const FitConfig& config, const InitialPredictor& f0,
                                         double density_bound) {
    if (!(delta > 0.0 && delta < 1.0))
        fail(ErrorCode::InvalidArgument, "delta must lie in (0,1)");
    const std::vector<std::size_t> source = domain_rows(ds, 0);
    const std::vector<std::size_t> target = domain_rows(ds, 1);
    if (source.empty()) fail(ErrorCode::InvalidArgument, "no source rows to fit on");

    // Source-marginal coverage is enforced alongside the ratio members.
    AuditorFamily family = make_propensity_family(theta_grid, clamp_lo, clamp_hi, true);

    Mapping mapping;
    mapping.id = MappingId::Quantile;
    mapping.delta = delta;
    mapping.density_bound = density_bound;

    // Projection bounds from the source labels only; target labels are
    // reserved for evaluation.
    double lo = kInf, hi = -kInf;
    for (std::size_t i : source) {
        lo = std::min(lo, ds.y(i));
        hi = std::max(hi, ds.y(i));
    }
    double range = hi - lo;
    if (range == 0.0) range = 1.0;
    const ProjectionInterval proj{lo - range, hi + range};

    ShiftConformalResult out;
    out.fit = fit(config, ds, family, mapping, f0, proj, source);

    const std::vector<double> preds = out.fit.chain.predict_batch(ds);
    std::size_t cov_t = 0, cov_s = 0;
    for (std::size_t i : target)
        if (preds[i] <= ds.y(i)) ++cov_t;
    for (std::size_t i : source)
        if (preds[i] <= ds.y(i)) ++cov_s;
    out.n_target = target.size();
    if (!target.empty())
        out.target_coverage = static_cast<double>(cov_t) / static_cast<double>(target.size());
    out.source_coverage = static_cast<double>(cov_s) / static_cast<double>(source.size());
    return out;
}

MissingFitResult fit_missing(const Dataset& ds, const std::vector<std::vector<double>>& theta_grid,
                             const std::vector<InitialPredictor>& p_list, double clamp_lo,
                             double clamp_hi, const FitConfig& config, const InitialPredictor& f0,
                             const Dataset* oracle_complete) {
    std::vector<std::size_t> complete_rows;
    for (std::size_t i = 0; i < ds.rows; ++i)
        if (ds.row_complete(i)) complete_rows.push_back(i);
    if (complete_rows.empty()) fail(ErrorCode::InvalidArgument, "no complete rows to fit on");
    for (std::size_t i : complete_rows) {
        const double y = ds.y(i);
        if (!(y >= 0.0 && y <= 1.0))
            fail(ErrorCode::InvalidArgument, "missing-data fit requires labels in [0,1]");
    }

    // Validate the p grid on complete rows only; masked cells are NaN.
    AuditorFamily family = make_shift_composite_family(theta_grid, p_list, clamp_lo, clamp_hi, nullptr);
    for (const auto& p : p_list) {
        for (std::size_t i : complete_rows) {
            const double v = p.eval(RowView{ds.x(i), ds.g(i)});
            if (!(v >= 0.0 && v <= 1.0))
                fail(ErrorCode::InvalidArgument, "baseline predictor leaves [0,1] on complete rows");
        }
    }

    Mapping mapping; // residual
    const ProjectionInterval proj{0.0, 1.0};
    MissingFitResult out;
    out.fit = fit(config, ds, family, mapping, f0, proj, complete_rows);
    out.n_complete = complete_rows.size();

    double cc = 0.0;
    for (std::size_t k = 0; k < complete_rows.size(); ++k) {
        const double d = out.fit.fitted_values[k] - ds.y(out.fit.working_rows[k]);
        cc += d * d;
    }
    out.complete_case_mse = cc / static_cast<double>(complete_rows.size());

    if (oracle_complete) {
        if (oracle_complete->dim != ds.dim)
            fail(ErrorCode::InvalidArgument, "oracle copy has a different feature layout");
        const std::vector<double> preds = out.fit.chain.predict_batch(*oracle_complete);
        double mse = 0.0;
        for (std::size_t i = 0; i < oracle_complete->rows; ++i) {
            const double d = preds[i] - oracle_complete->y(i);
            mse += d * d;
        }
        out.full_mse = mse / static_cast<double>(oracle_complete->rows);
    }
    return out;
}

MultiParityResult fit_multiparity(const Dataset& ds, const std::vector<GroupPredicate>& groups,
                                  const FitConfig& config, const InitialPredictor& f0) {
    AuditorFamily family = make_centered_group_family(ds, groups);
    Mapping mapping;
    mapping.id = MappingId::ParityExpected;
    const ProjectionInterval proj{0.0, 1.0};

    MultiParityResult out;
    out.fit = fit(config, ds, family, mapping, f0, proj);
    out.post_sup_violation = out.fit.report.final_max_violation;

    for (const auto& g : groups) {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < out.fit.working_rows.size(); ++k) {
            const std::size_t i = out.fit.working_rows[k];
            RowView row{ds.x(i), ds.g(i)};
            bool in = true;
            for (const auto& t : g.terms)
                if (!t.eval(row)) { in = false; break; }
            if (in) {
                acc += out.fit.fitted_values[k];
                ++cnt;
            }
        }
        out.selection_rates.push_back(cnt ? acc / static_cast<double>(cnt) : 0.0);
    }
    return out;
}

} // namespace happymap
