#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "engine.hpp"
#include "synth.hpp"

namespace happymap {

// Projection interval for quantile chains: label range widened by one range
// on each side.
ProjectionInterval label_range_proj(const Dataset& ds);

double label_quantile(const Dataset& ds, double level);

// One-sided (1-delta) coverage bound l_delta: engine fit with the quantile
// mapping, so P(y >= l(x)) tracks 1-delta under every auditor in the family.
FitResult fit_lower_bound(double delta, const Dataset& ds, const AuditorFamily& family,
                          const FitConfig& config, const InitialPredictor& f0,
                          double density_bound,
                          std::optional<ProjectionInterval> proj = std::nullopt);

struct TwoSidedResult {
    IntervalPredictor interval;
    FitResult lower_fit;
    FitResult upper_fit;
    std::vector<std::string> warnings;
    double crossing_fraction = 0.0;
};

// Cutoffs delta/2 and 1-delta/2; the pair covers with probability about
// 1-delta and inherits a 2-alpha audit bound per auditor.
TwoSidedResult fit_two_sided(double delta, const Dataset& ds, const AuditorFamily& family,
                             const FitConfig& config, double density_bound,
                             std::optional<InitialPredictor> f0_lower = std::nullopt,
                             std::optional<InitialPredictor> f0_upper = std::nullopt);

struct ScoreIntervalResult {
    IntervalPredictor interval;
    RunReport report;
};

// Threshold q(x) on scores m(x,y)=|y-h(x)| at level 1-delta; the interval is
// the score inverter [h-q, h+q]. Membership is checked against the score on
// a row sample before returning.
ScoreIntervalResult fit_score_interval(double delta, const Dataset& ds,
                                       const InitialPredictor& score_base,
                                       const AuditorFamily& family, const FitConfig& config,
                                       double density_bound);

struct MultivalidResult {
    FitResult fit;
    double lambda = 0.0;
    std::vector<GroupPredicate> base_groups;
};

MultivalidResult fit_multivalid(double delta, const Dataset& ds, double lambda,
                                const std::vector<GroupPredicate>& base_groups,
                                const FitConfig& config, const InitialPredictor& f0,
                                double density_bound);

struct NoHarmResult {
    double mse_init = 0.0;
    double mse_final = 0.0;
    double ratio = 0.0;
    FitResult fit;
    Dataset augmented; // input features plus the noisy-start column the chain references
};

// Starts the quantile fit from the oracle quantile plus seeded noise and
// reports how far the output drifts from the oracle.
NoHarmResult no_harm_eval(const Dataset& ds, const nlohmann::json& oracle, double sigma_init,
                          double delta, const std::string& family_kind,
                          const std::vector<GroupPredicate>& groups, const FitConfig& config,
                          double density_bound);

struct CellCoverage {
    std::string group_id;
    std::string bin_id; // "all" when unbinned
    std::size_t n = 0;
    double coverage = 0.0;
    double deviation = 0.0;      // coverage - (1-delta)
    double mass_weighted = 0.0;  // mass * deviation
    double se = 0.0;             // sqrt(cov*(1-cov)/n)
};

// Group x bin coverage table for a one-sided bound; groups may be empty
// (marginal row only) and n_bins zero (no binning).
std::vector<CellCoverage> coverage_cells(const std::vector<double>& predictions,
                                         const Dataset& ds, double delta,
                                         const std::vector<GroupPredicate>& groups,
                                         double bin_lambda, const ProjectionInterval& bin_range);

std::string coverage_csv(const std::vector<CellCoverage>& cells);

} // namespace happymap
