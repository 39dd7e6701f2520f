#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "descriptors.hpp"
#include "mappings.hpp"
#include "types.hpp"

namespace happymap {

// Ball of linear auditors c(x) = w . phi(x), ||w||_2 <= b_w, phi = features
// (optionally with a constant coordinate). The maximizing member has a closed
// form, so this family is searched exactly without enumeration.
struct LinearSpec {
    double b_w = 1.0;
    bool include_offset = false;
};

// Symmetric collection of auditors plus the constants the fit loop needs:
// b_bound with sup_c E[c^2] <= b_bound, and a dimension estimate used only to
// size validation folds.
struct AuditorFamily {
    std::vector<AuditorDescriptor> members; // closure applied: -c follows c
    std::optional<LinearSpec> linear;
    double b_bound = 1.0;
    double dim_estimate = 0.0;
    std::vector<std::string> warnings;

    bool empty() const { return members.empty() && !linear.has_value(); }
    std::size_t size() const { return members.size(); }
};

struct GroupPredicate {
    std::vector<PredTerm> terms;
    std::string name;
};

AuditorFamily make_constant_family();

// Group predicates from explicit specs and/or the dataset's group columns.
// depth=2 adds pairwise intersections. scale_inv_mass divides each indicator
// by its empirical mass so violations read as per-group deviations.
AuditorFamily make_group_family(const Dataset& ds, std::vector<GroupPredicate> preds,
                                int depth = 1, bool scale_inv_mass = false);
std::vector<GroupPredicate> group_predicates_from_columns(const Dataset& ds);

AuditorFamily make_stump_family(const Dataset& ds, int thresholds_per_feature);

AuditorFamily make_linear_family(const Dataset& ds, double b_w, bool include_offset);

AuditorFamily make_propensity_family(const std::vector<std::vector<double>>& theta_grid,
                                     double clamp_lo, double clamp_hi,
                                     bool include_constant = false);

AuditorFamily make_shift_composite_family(const std::vector<std::vector<double>>& theta_grid,
                                          const std::vector<InitialPredictor>& p_list,
                                          double clamp_lo, double clamp_hi,
                                          const Dataset* validate_on = nullptr);

// Bin indicators of width lambda over [lo, hi]; with base groups, products
// bin x group instead.
AuditorFamily make_multivalidity_family(double lambda, double lo, double hi,
                                        const std::vector<GroupPredicate>& base = {});

// Auditors g(x) - mean(g) with the centering computed once on the dataset.
AuditorFamily make_centered_group_family(const Dataset& ds,
                                         const std::vector<GroupPredicate>& preds);

AuditorFamily union_family(std::vector<AuditorFamily> parts);

struct WeakLearnResult {
    AuditorDescriptor best;
    int member_index = 0; // -1 when the closed-form linear member wins
    double violation = 0.0;
};

struct AuditRow {
    std::string auditor_id;
    double mean_cs = 0.0;
};

struct AuditReport {
    std::vector<AuditRow> rows;
    double max_abs_violation = 0.0;
};

// Per-row x-part cache over a fixed working-row order; weak_learn and audit
// evaluate windows of that order so fold scans stay O(window * members).
class CompiledFamily {
public:
    CompiledFamily(const AuditorFamily& family, const Dataset& ds, std::vector<std::size_t> rows);

    const std::vector<std::size_t>& rows() const { return rows_; }
    const AuditorFamily& family() const { return *family_; }

    // values and s are aligned to the working-row order.
    WeakLearnResult weak_learn(std::span<const double> values, std::span<const double> s,
                               std::size_t begin, std::size_t end) const;
    AuditReport audit(std::span<const double> values, std::span<const double> s,
                      std::size_t begin, std::size_t end) const;

    // Signed c values of one member over all working rows.
    void member_values(int member_index, const AuditorDescriptor& desc,
                       std::span<const double> values, std::vector<double>& out) const;

private:
    struct MemberCache {
        std::vector<double> a; // signed x-part per working row
        std::vector<double> p; // baseline values (FMinusBase only)
        AuditorDescriptor::FPart fkind = AuditorDescriptor::FPart::One;
        double bin_lo = 0.0, bin_hi = 0.0;
        bool hi_closed = false;
    };

    double member_mean(const MemberCache& m, std::span<const double> values,
                       std::span<const double> s, std::size_t begin, std::size_t end) const;
    std::pair<AuditorDescriptor, double> linear_best(std::span<const double> s,
                                                     std::size_t begin, std::size_t end) const;

    const AuditorFamily* family_;
    const Dataset* ds_;
    std::vector<std::size_t> rows_;
    std::vector<MemberCache> members_;
    std::vector<std::vector<double>> phi_; // linear family coordinates per row
};

// One-shot conveniences over the full dataset, predictions aligned to rows.
WeakLearnResult weak_learn(const AuditorFamily& family, std::span<const double> predictions,
                           const Dataset& ds, const Mapping& mapping);
AuditReport audit(const AuditorFamily& family, std::span<const double> predictions,
                  const Dataset& ds, const Mapping& mapping);

} // namespace happymap
