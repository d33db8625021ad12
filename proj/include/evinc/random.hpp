#pragma once

#include <cstdint>

namespace evinc {

/// Uniform float in [0, 1) from the top 24 bits of a generator word, so
/// values depend only on the (standardized) engine output.
inline float unit_float(std::uint64_t bits) { return float(bits >> 40) * (1.0f / 16777216.0f); }

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_double(std::uint64_t bits) { return double(bits >> 11) * (1.0 / 9007199254740992.0); }

}  // namespace evinc
