#pragma once

#include <cstdint>

#include "util.hpp"

namespace happymap {

// Counter-based generator: every draw is a pure function of
// (seed, row, column, stream), so row-parallel generation and reruns
// produce identical streams.
namespace rng {

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t key(uint64_t seed, uint64_t row, uint64_t col, uint64_t stream) {
    uint64_t h = mix64(seed ^ 0x6a09e667f3bcc908ULL);
    h = mix64(h ^ row);
    h = mix64(h ^ (col + 0x9e3779b97f4a7c15ULL));
    h = mix64(h ^ (stream + 0x3c6ef372fe94f82bULL));
    return h;
}

// Uniform on (0,1), never exactly 0 or 1.
inline double uniform(uint64_t seed, uint64_t row, uint64_t col, uint64_t stream) {
    const uint64_t bits = key(seed, row, col, stream) >> 11; // 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

inline double normal(uint64_t seed, uint64_t row, uint64_t col, uint64_t stream) {
    return normal_quantile(uniform(seed, row, col, stream));
}

} // namespace rng
} // namespace happymap
