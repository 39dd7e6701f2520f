#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chain.hpp"
#include "families.hpp"
#include "mappings.hpp"
#include "types.hpp"

namespace happymap {

enum class FitMode { Population, FreshFolds, Reuse };

struct FitConfig {
    double alpha = 0.05;
    std::optional<double> eta;          // empty = auto
    std::optional<long long> max_iters; // empty = auto
    FitMode mode = FitMode::Population;
    std::optional<std::size_t> fold_size;
    uint64_t seed = 0;
};

struct IterationRecord {
    long long iteration = 0;
    int member_index = 0;
    std::string auditor_id;
    double violation = 0.0;
    double potential_before = 0.0;
    double potential_after = 0.0;
};

enum class FitStatus { Converged, BudgetExhausted };

struct RunReport {
    std::vector<IterationRecord> iterations;
    FitStatus status = FitStatus::Converged;
    double final_max_violation = 0.0;
    double resolved_eta = 0.0;
    long long resolved_T = 0;
    double progress_bound = 0.0; // guaranteed potential decrease per update
    double potential_upper = 0.0;
    double potential_lower = 0.0;
    std::size_t fold_size_used = 0;
    std::vector<std::string> warnings;

    std::string status_string() const {
        return status == FitStatus::Converged ? "converged" : "budget-exhausted";
    }
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

struct StepOutcome {
    bool updated = false;
    AuditorDescriptor auditor;
    int member_index = 0;
    double violation = 0.0;
};

struct FitResult {
    PredictorChain chain;
    RunReport report;
    std::vector<double> fitted_values;     // aligned with working_rows
    std::vector<std::size_t> working_rows; // dataset row indices, fit order
};

// One while-loop driver. Resolves step size, iteration budget and fold layout
// up front; step() performs a single audit-and-update round; run() loops to
// convergence or budget and assembles the chain. The engine copies the
// family; the dataset must outlive it.
class Engine {
public:
    Engine(const FitConfig& config, const Dataset& ds, AuditorFamily family,
           const Mapping& mapping, InitialPredictor f0, ProjectionInterval proj,
           std::vector<std::size_t> rows = {});

    StepOutcome step();
    FitResult run();

    double resolved_eta() const { return eta_; }
    long long resolved_T() const { return T_; }
    double threshold() const { return threshold_; }
    long long iteration() const { return iteration_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<std::size_t>& working_rows() const { return compiled_->rows(); }
    double potential() const;

private:
    void refresh_s();
    std::pair<std::size_t, std::size_t> window(long long t) const;

    const Dataset* ds_;
    AuditorFamily family_;
    Mapping mapping_;
    InitialPredictor f0_;
    ProjectionInterval proj_;
    FitConfig config_;
    std::unique_ptr<CompiledFamily> compiled_;

    double eta_ = 0.0;
    long long T_ = 0;
    double threshold_ = 0.0;
    std::size_t fold_size_ = 0;

    long long iteration_ = 0;
    std::vector<double> values_;
    std::vector<double> s_;
    std::vector<double> labels_; // aligned with working rows (0 when absent)
    std::vector<ChainStep> steps_;
    RunReport report_;
};

FitResult fit(const FitConfig& config, const Dataset& ds, const AuditorFamily& family,
              const Mapping& mapping, const InitialPredictor& f0, const ProjectionInterval& proj,
              std::vector<std::size_t> rows = {});

} // namespace happymap
