#pragma once

#include <cstdint>

namespace rankclust {

// IEEE-754 binary16 conversion. Narrowing rounds to nearest, ties to even;
// overflow goes to infinity and NaN stays NaN (quiet).
std::uint16_t float_to_half(float value) noexcept;
float half_to_float(std::uint16_t bits) noexcept;

inline float round_to_half(float value) noexcept { return half_to_float(float_to_half(value)); }

}  // namespace rankclust
