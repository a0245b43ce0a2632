#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <vector>

#include "disphom/errors.hpp"
#include "disphom/types.hpp"

namespace disphom {

struct FwhmResult {
  double fwhm_ps = 0.0;
  double baseline = 0.0;
  double minimum = 0.0;
  double minimum_tau_ps = 0.0;
  double left_crossing_ps = 0.0;
  double right_crossing_ps = 0.0;
};

/// Width of the dip at half depth.
///
/// The baseline is the largest value in the scan and the half level sits
/// midway between it and the global minimum. Starting from the minimum, the
/// first crossing on each side is located by linear interpolation, so side
/// lobes further out never move the result.
inline FwhmResult extract_fwhm(const HomCurve& curve) {
  detail::require(curve.size() >= 5, "extract_fwhm: need at least 5 samples");
  const auto tau = curve.tau_ps();
  const auto y = curve.values();

  const auto min_it = std::min_element(y.begin(), y.end());
  const auto max_it = std::max_element(y.begin(), y.end());
  const auto i0 = static_cast<std::size_t>(std::distance(y.begin(), min_it));
  if (!(*max_it > *min_it) || i0 == 0 || i0 + 1 == y.size())
    throw DomainError("no dip found");

  FwhmResult out;
  out.baseline = *max_it;
  out.minimum = *min_it;
  out.minimum_tau_ps = tau[i0];
  const double half = 0.5 * (out.baseline + out.minimum);

  auto interpolate = [&](std::size_t lo, std::size_t hi) {
    // y[lo] and y[hi] straddle the half level.
    const double f = (half - y[lo]) / (y[hi] - y[lo]);
    return tau[lo] + f * (tau[hi] - tau[lo]);
  };

  std::size_t j = i0;
  while (j > 0 && y[j - 1] < half) --j;
  if (j == 0) throw DomainError("dip not resolved in scan range (left side)");
  out.left_crossing_ps = interpolate(j, j - 1);

  j = i0;
  while (j + 1 < y.size() && y[j + 1] < half) ++j;
  if (j + 1 == y.size()) throw DomainError("dip not resolved in scan range (right side)");
  out.right_crossing_ps = interpolate(j, j + 1);

  out.fwhm_ps = out.right_crossing_ps - out.left_crossing_ps;
  return out;
}

struct Extremum {
  double tau_ps = 0.0;
  double value = 0.0;
  bool is_maximum = false;
};

/// Interior local extrema, refined by a parabola through the three samples
/// around each discrete extremum. Plateaus (equal neighbours) are skipped.
inline std::vector<Extremum> find_extrema(const HomCurve& curve) {
  const auto tau = curve.tau_ps();
  const auto y = curve.values();
  std::vector<Extremum> out;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    const bool is_max = y[i] > y[i - 1] && y[i] > y[i + 1];
    const bool is_min = y[i] < y[i - 1] && y[i] < y[i + 1];
    if (!is_max && !is_min) continue;
    const double x0 = tau[i - 1], x1 = tau[i], x2 = tau[i + 1];
    const double y0 = y[i - 1], y1 = y[i], y2 = y[i + 1];
    const double d01 = (y1 - y0) / (x1 - x0);
    const double d12 = (y2 - y1) / (x2 - x1);
    const double curvature = (d12 - d01) / (x2 - x0);
    double xv = x1;
    double yv = y1;
    if (curvature != 0.0) {
      // Vertex of the interpolating parabola.
      xv = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
      xv = std::clamp(xv, x0, x2);
      yv = y1 + (xv - x1) * (d01 + curvature * (xv - x0));
    }
    out.push_back({xv, yv, is_max});
  }
  return out;
}

}  // namespace disphom
