#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "engine.hpp"
#include "fairness.hpp"
#include "synth.hpp"

namespace happymap {

std::vector<std::size_t> domain_rows(const Dataset& ds, int tag); // 0=source, 1=target

struct UniversalL2Result {
    FitResult fit;
    double target_mse_bayes = -1.0;   // vs E[y|x] when the oracle exposes it
    double baseline_mse_bayes = -1.0; // the uncorrected f0 on the same rows
    double target_mse_label = -1.0;
    std::size_t n_target = 0;
};

// Residual mapping on O=[0,1] with the composite family
// +-(1-sigma)/sigma * (f - p); fits on source rows, evaluates on target rows.
UniversalL2Result fit_universal_l2(const Dataset& ds,
                                   const std::vector<std::vector<double>>& theta_grid,
                                   const std::vector<InitialPredictor>& p_list, double clamp_lo,
                                   double clamp_hi, const FitConfig& config,
                                   const InitialPredictor& f0,
                                   const nlohmann::json* oracle = nullptr);

struct ShiftConformalResult {
    FitResult fit;
    double target_coverage = -1.0;
    double source_coverage = -1.0;
    std::size_t n_target = 0;
};

// Quantile mapping with the propensity-ratio family (constant auditor always
// included); target coverage is evaluated on the held-out target rows.
ShiftConformalResult fit_shift_conformal(double delta, const Dataset& ds,
                                         const std::vector<std::vector<double>>& theta_grid,
                                         double clamp_lo, double clamp_hi,
                                         const FitConfig& config, const InitialPredictor& f0,
                                         double density_bound);

struct MissingFitResult {
    FitResult fit;
    double full_mse = -1.0;          // on the uncorrupted copy when supplied
    double complete_case_mse = -1.0; // on the rows the fit saw
    std::size_t n_complete = 0;
};

// Fit restricted to complete rows with the composite family standing in for
// inverse-propensity weights times the residual direction.
MissingFitResult fit_missing(const Dataset& ds, const std::vector<std::vector<double>>& theta_grid,
                             const std::vector<InitialPredictor>& p_list, double clamp_lo,
                             double clamp_hi, const FitConfig& config, const InitialPredictor& f0,
                             const Dataset* oracle_complete = nullptr);

struct MultiParityResult {
    FitResult fit;
    double post_sup_violation = 0.0;
    std::vector<double> selection_rates; // per base group
};

// Parity mapping with centered auditors g - mean(g); drives the correlation
// between group membership and the selection probability below alpha.
MultiParityResult fit_multiparity(const Dataset& ds, const std::vector<GroupPredicate>& groups,
                                  const FitConfig& config, const InitialPredictor& f0);

} // namespace happymap
