#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "descriptors.hpp"
#include "types.hpp"

namespace happymap {

// Every generator is keyed by (seed, row, column, stream) so identical specs
// reproduce datasets byte for byte. Oracles are closed-form and shipped as a
// JSON sidecar; evaluators below recompute them per row.
struct SynthOutput {
    Dataset data;
    Dataset aux;         // uncorrupted copy for the missingness generator
    bool has_aux = false;
    nlohmann::json oracle;
};

// x ~ U([0,1]^d), y = x0 + (0.1 + 0.2*x1) * eps, eps ~ N(0,1).
SynthOutput gen_hetero(std::size_t n, std::size_t d, uint64_t seed);

// x|so ~ N(0,I), x|ta ~ N(mu,I); y = m(x) + (u-1/2)*w with
// m(x) = w/2 + (1-w)*logistic(gamma.x~). The true propensity ratio is
// exp(mu.x - |mu|^2/2), i.e. logistic-parametric with theta* = [-mu, |mu|^2/2].
SynthOutput gen_shift(std::size_t n_so, std::size_t n_ta, const std::vector<double>& mu,
                      uint64_t seed, const std::vector<double>& gamma = {},
                      double noise_width = 0.5);

struct MissingSpec {
    enum class Mechanism { MCAR, MAR, MNAR };
    Mechanism mechanism = Mechanism::MCAR;
    double rho = 0.8;               // MCAR completeness probability
    std::vector<double> theta;      // MAR/MNAR: logistic params over [x, 1]
    int masked_col = -1;            // default: last feature column
};

// Masks masked_col on incomplete rows; the uncorrupted copy is kept in aux.
SynthOutput gen_missing(const Dataset& base, const nlohmann::json& base_oracle,
                        const MissingSpec& spec, uint64_t seed);

struct PredicateSpec {
    int feature = 0;
    bool greater = false;
    double threshold = 0.0;
    std::string name;
};

// Adds g_ columns for each predicate and, at depth 2, each pairwise AND.
Dataset gen_groups(const Dataset& ds, const std::vector<PredicateSpec>& preds, int depth = 1);

// Oracle evaluators over the sidecar JSON.
namespace oracle {
double cond_mean(const nlohmann::json& o, std::span<const double> x);
double cond_quantile(const nlohmann::json& o, double delta, std::span<const double> x);
double density_bound(const nlohmann::json& o);
// Shift scenarios: p_ta(x)/p_so(x), and the complete-case propensity P(R=1|x).
double propensity_ratio(const nlohmann::json& o, std::span<const double> x);
std::vector<double> true_theta(const nlohmann::json& o);
double complete_propensity(const nlohmann::json& o, std::span<const double> x);
InitialPredictor bayes_predictor(const nlohmann::json& o);
} // namespace oracle

// Entry point for the synth command / C API: spec is a JSON generator block.
SynthOutput run_generator(const nlohmann::json& spec);

} // namespace happymap
