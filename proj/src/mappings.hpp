#pragma once

#include <string>

#include "util.hpp"

namespace happymap {

enum class MappingId { Residual, Quantile, RawMoment, ParityExpected };

// A mapping s(f, y) together with its potential L(f, y). L is the
// anti-derivative of s in f, so mean L decreases by a known amount on every
// accepted update; kappa bounds the curvature of that potential.
struct Mapping {
    MappingId id = MappingId::Residual;
    double delta = 0.0;        // Quantile level, in (0,1)
    int k = 1;                 // RawMoment order, k >= 1
    double density_bound = 10; // K_p for Quantile

    double s(double f, double y) const;
    double potential(double f, double y) const;
    double kappa() const;

    // C^l: a lower bound on the mean potential for any predictor. The
    // quantile potential is bounded through the label magnitude.
    double potential_lower(double max_abs_label) const;

    // Config strings: "residual" | "quantile:<delta>" | "moment:<k>" | "parity".
    static Mapping parse(const std::string& text, double density_bound = 10.0);
    std::string to_string() const;
};

inline double Mapping::s(double f, double y) const {
    switch (id) {
        case MappingId::Residual: return f - y;
        case MappingId::Quantile: return (1.0 - delta) - (f <= y ? 1.0 : 0.0);
        case MappingId::RawMoment: {
            double fk = 1.0, yk = 1.0;
            for (int i = 0; i < k; ++i) { fk *= f; yk *= y; }
            return fk - yk;
        }
        case MappingId::ParityExpected: return f;
    }
    return 0.0;
}

inline double Mapping::potential(double f, double y) const {
    switch (id) {
        case MappingId::Residual: return 0.5 * (f - y) * (f - y);
        case MappingId::Quantile: {
            const double m = f - y < 0.0 ? f - y : 0.0;
            return (1.0 - delta) * f - m;
        }
        case MappingId::RawMoment: {
            double fk = 1.0, yk = 1.0;
            for (int i = 0; i < k; ++i) { fk *= f; yk *= y; }
            return fk * f / (k + 1.0) - yk * f;
        }
        case MappingId::ParityExpected: return 0.5 * f * f;
    }
    return 0.0;
}

inline double Mapping::kappa() const {
    switch (id) {
        case MappingId::Residual: return 0.5;
        case MappingId::Quantile: return density_bound;
        case MappingId::RawMoment: return 0.5 * k;
        case MappingId::ParityExpected: return 0.5;
    }
    return 0.5;
}

inline double Mapping::potential_lower(double max_abs_label) const {
    switch (id) {
        case MappingId::Residual: return 0.0;
        case MappingId::Quantile: return -(1.0 - delta) * max_abs_label;
        case MappingId::RawMoment: return -1.0;
        case MappingId::ParityExpected: return 0.0;
    }
    return 0.0;
}

} // namespace happymap
