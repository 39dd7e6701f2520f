#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "types.hpp"
#include "util.hpp"

namespace happymap {

// One comparison against a feature or group column; a conjunction of terms
// defines a group predicate that evaluates on unseen rows.
struct PredTerm {
    int col = 0;
    bool is_group = false;
    bool greater = false; // false: value <= tau, true: value > tau
    double tau = 0.0;

    bool eval(const RowView& row) const {
        const double v = is_group ? row.g[static_cast<std::size_t>(col)]
                                  : row.x[static_cast<std::size_t>(col)];
        return greater ? v > tau : v <= tau;
    }
};

// Base predictors: the f0 of a chain, and the p(x) inside composite auditors.
// Restricted to forms that evaluate on a raw feature vector.
struct InitialPredictor {
    enum class Kind { Constant, Linear, Column, LogisticLinear };

    Kind kind = Kind::Constant;
    double value = 0.0;          // Constant value; LogisticLinear output scale
    std::vector<double> weights; // Linear: per-feature; LogisticLinear: d+1 with intercept last
    double offset = 0.0;         // Linear offset; LogisticLinear output offset
    int column = 0;

    double eval(const RowView& row) const;
    // Rejects column references and weight vectors that do not fit a
    // d-dimensional feature row.
    void validate(std::size_t n_features) const;
    nlohmann::json to_json() const;
    static InitialPredictor from_json(const nlohmann::json& j);

    static InitialPredictor constant(double v) {
        InitialPredictor p;
        p.kind = Kind::Constant;
        p.value = v;
        return p;
    }
    static InitialPredictor logistic_linear(std::vector<double> theta, double out_scale = 1.0,
                                            double out_offset = 0.0) {
        InitialPredictor p;
        p.kind = Kind::LogisticLinear;
        p.weights = std::move(theta);
        p.value = out_scale;
        p.offset = out_offset;
        return p;
    }
};

// An auditor c(f(x), x). Evaluation never sees labels. The x-dependent factor
// and the f-dependent factor are separable, which the fit loop exploits by
// caching the former per row.
struct AuditorDescriptor {
    enum class Kind {
        Constant,
        Group,
        Stump,
        Linear,
        Bin,
        Product,
        PropensityRatio,
        ShiftComposite,
        CenteredGroup,
    };
    enum class FPart { One, BinInd, FMinusBase };

    Kind kind = Kind::Constant;
    double sign = 1.0;
    double scale = 1.0;           // Group/Product/CenteredGroup
    std::vector<PredTerm> terms;  // Group/Product/CenteredGroup
    int col = 0;                  // Stump
    double tau = 0.0;             // Stump
    bool greater = false;         // Stump
    std::vector<double> weights;  // Linear
    double offset = 0.0;          // Linear
    double bin_lo = 0.0, bin_hi = 0.0; // Bin/Product, interval [lo, hi) or [lo, hi]
    bool bin_hi_closed = false;
    std::vector<double> theta;    // PropensityRatio/ShiftComposite, intercept last
    double clamp_lo = 0.05, clamp_hi = 0.95;
    InitialPredictor baseline;    // ShiftComposite
    double center = 0.0;          // CenteredGroup

    FPart f_part_kind() const {
        switch (kind) {
            case Kind::Bin:
            case Kind::Product: return FPart::BinInd;
            case Kind::ShiftComposite: return FPart::FMinusBase;
            default: return FPart::One;
        }
    }
    bool depends_on_f() const { return f_part_kind() != FPart::One; }
    bool uses_groups() const;

    // The x-dependent factor, sign included.
    double x_part(const RowView& row) const;
    double f_part(double f, const RowView& row) const;
    double eval(double f, const RowView& row) const { return x_part(row) * f_part(f, row); }

    double propensity_ratio(const RowView& row) const;
    bool in_bin(double f) const {
        return f >= bin_lo && (bin_hi_closed ? f <= bin_hi : f < bin_hi);
    }

    AuditorDescriptor negated() const {
        AuditorDescriptor d = *this;
        d.sign = -d.sign;
        return d;
    }

    void validate(std::size_t n_features, std::size_t n_groups) const;

    std::string display() const;
    nlohmann::json to_json() const;
    static AuditorDescriptor from_json(const nlohmann::json& j);
};

// Chain-file helpers: reals stored as hex-float strings so round-trips are
// bit exact; plain JSON numbers are accepted on input.
nlohmann::json real_to_json(double v);
double real_from_json(const nlohmann::json& j);
nlohmann::json reals_to_json(const std::vector<double>& v);
std::vector<double> reals_from_json(const nlohmann::json& j);

} // namespace happymap
