#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "disphom/errors.hpp"

namespace disphom {

/// Amplitude s minimizing sum (s f - y)^2: s = <f, y> / <f, f>.
inline double profile_scale(std::span<const double> model, std::span<const double> data) {
  detail::require(model.size() == data.size(), "profile_scale: size mismatch");
  double fy = 0.0;
  double ff = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    fy += model[i] * data[i];
    ff += model[i] * model[i];
  }
  if (ff == 0.0) throw DomainError("scale undefined: model is identically zero");
  return fy / ff;
}

/// Weighted variant, minimizing sum w (s f - y)^2.
inline double profile_scale(std::span<const double> model, std::span<const double> data,
                            std::span<const double> weights) {
  detail::require(model.size() == data.size() && model.size() == weights.size(),
                  "profile_scale: size mismatch");
  double fy = 0.0;
  double ff = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    fy += weights[i] * model[i] * data[i];
    ff += weights[i] * model[i] * model[i];
  }
  if (ff == 0.0) throw DomainError("scale undefined: model is identically zero");
  return fy / ff;
}

}  // namespace disphom
