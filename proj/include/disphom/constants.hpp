#pragma once

#include <numbers>

namespace disphom::constants {

// Vacuum speed of light in the unit pairs used across the library.
inline constexpr double c_mm_per_ps = 0.299792458;
inline constexpr double c_nm_per_ps = 299792.458;

inline constexpr double ps_per_ns = 1.0e3;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_over_sqrt_pi = std::numbers::inv_sqrtpi * 2.0;
inline constexpr double ln2 = std::numbers::ln2;

}  // namespace disphom::constants
