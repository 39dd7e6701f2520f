#pragma once

#include <optional>
#include <string>
#include <vector>

#include "descriptors.hpp"
#include "types.hpp"

namespace happymap {

struct ChainStep {
    AuditorDescriptor auditor;
    double eta = 0.0;
};

// The portable output of every fit: f0 plus the ordered update steps and the
// projection interval. Replaying the chain on a training row reproduces the
// fit engine's tabular value exactly.
struct PredictorChain {
    InitialPredictor f0;
    std::vector<ChainStep> steps;
    ProjectionInterval proj;
    std::size_t n_features = 0;
    std::size_t n_groups = 0;

    bool uses_groups() const;

    double predict(const RowView& row) const;
    // Raw-vector entry point; x must carry n_features values and, when the
    // chain references group columns, g must carry n_groups values.
    double predict(std::span<const double> x, std::span<const double> g = {}) const;

    // Step-major replay over a whole dataset; x-parts of repeated auditors
    // are computed once. Produces the same values as row-by-row predict.
    std::vector<double> predict_batch(const Dataset& ds) const;

    std::string serialize() const;
    static PredictorChain deserialize(const std::string& text);
};

// Two-sided interval predictor. TwoChains holds quantile chains for both
// cutoffs; ScoreBased holds a base predictor plus a threshold chain over
// nonconformity scores.
struct IntervalPredictor {
    enum class Construction { TwoChains, ScoreBased };

    Construction construction = Construction::TwoChains;
    std::optional<PredictorChain> lower, upper; // TwoChains
    InitialPredictor score_base;                // ScoreBased: m(x,y)=|y-h(x)|
    std::optional<PredictorChain> threshold;    // ScoreBased: q(x)
    nlohmann::json meta = nlohmann::json::object(); // provenance: delta, family, ...

    std::pair<double, double> interval(const RowView& row) const;
    bool covers(const RowView& row, double y) const;

    std::string serialize() const;
    static IntervalPredictor deserialize(const std::string& text);
};

} // namespace happymap
