#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "util.hpp"

namespace happymap {

struct ProjectionInterval {
    double lo = -kInf;
    double hi = kInf;

    double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
    bool contains(double v) const { return v >= lo && v <= hi; }
    void validate() const {
        if (!(lo <= hi)) fail(ErrorCode::InvalidArgument, "projection interval requires lo <= hi");
    }
};

// Row-major table of features and labels with optional group columns,
// source/target tags and a missingness mask. Immutable once built.
struct Dataset {
    std::size_t rows = 0;
    std::size_t dim = 0;       // feature columns
    std::size_t n_groups = 0;  // group columns

    std::vector<double> features; // rows*dim, NaN where missing
    std::vector<double> labels;   // rows, or empty when no y column
    std::vector<double> groups;   // rows*n_groups, {0,1}-valued
    std::vector<int8_t> domain;   // rows; 0=source 1=target; empty if untagged
    std::vector<uint8_t> miss_mask; // rows*dim, 1=observed; empty if fully observed
    std::vector<uint8_t> complete;  // rows; empty if fully observed

    std::vector<std::string> feature_names; // without the x_ prefix
    std::vector<std::string> group_names;   // without the g_ prefix

    bool has_labels() const { return !labels.empty(); }
    bool has_domain() const { return !domain.empty(); }
    bool has_mask() const { return !miss_mask.empty(); }

    std::span<const double> x(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }
    std::span<const double> g(std::size_t i) const {
        if (n_groups == 0) return {};
        return {groups.data() + i * n_groups, n_groups};
    }
    double y(std::size_t i) const { return labels[i]; }
    bool row_complete(std::size_t i) const { return complete.empty() ? true : complete[i] != 0; }

    // Enforces the shared-row-count, {0,1} group and mask/complete invariants.
    void validate() const;

    int find_feature(const std::string& name) const;
};

struct RowView {
    std::span<const double> x;
    std::span<const double> g;
};

} // namespace happymap
