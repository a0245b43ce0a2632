#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "disphom/errors.hpp"

// Units: times in ps, angular frequencies in rad/ps, variance scales
// (rho, r, s) in ps^-2, beta2 in ps^2/km, fiber lengths in km. Field names
// carry the unit wherever it is not one of those defaults.

namespace disphom {

using ComplexValue = std::complex<double>;

/// Nonlinear crystal and pump. Group-index differences are pump minus
/// signal/idler, so gamma = delta_ng / c.
struct SourceParams {
  double delta_ng_signal = 0.0;
  double delta_ng_idler = 0.0;
  double crystal_length_mm = 1.0;
  double pump_wavelength_nm = 775.0;
  double pump_sigma_radps = 0.0;
  double poling_period_um = 0.0;  // record only

  void validate() const {
    detail::require(crystal_length_mm > 0.0, "crystal_length_mm must be > 0");
    detail::require(pump_wavelength_nm > 0.0, "pump_wavelength_nm must be > 0");
    detail::require(pump_sigma_radps >= 0.0, "pump_sigma_radps must be >= 0");
    detail::require(std::isfinite(delta_ng_signal) && std::isfinite(delta_ng_idler),
                    "group-index differences must be finite");
  }
};

/// How a rectangular bandpass is matched to the Gaussian filter model:
/// equal FWHM of the field amplitude, or of the transmitted intensity.
enum class FilterConvention { FieldLevel, IntensityLevel };

struct FilterParams {
  double center_wavelength_nm = 1550.0;
  double fwhm_nm = 12.0;
  FilterConvention convention = FilterConvention::FieldLevel;

  void validate() const {
    detail::require(center_wavelength_nm > 0.0, "center_wavelength_nm must be > 0");
    detail::require(fwhm_nm > 0.0, "fwhm_nm must be > 0");
  }
};

/// Quantities derived from the source and filter.
///
/// `sigma_pm` and the normalized gammas diverge in the exact extended
/// phase-matching limit (gamma_i + gamma_s == 0); `pure_epm` is set then and
/// those fields hold infinities. r, s and rho stay finite.
struct DerivedSpectral {
  double gamma_signal = 0.0;  // ps/mm
  double gamma_idler = 0.0;   // ps/mm
  double gamma_tilde_signal = 0.0;
  double gamma_tilde_idler = 0.0;
  double sigma_pm = 0.0;  // rad/ps
  double r = 0.0;
  double r_p = 0.0;
  double s = 0.0;
  double rho = 0.0;
  bool pure_epm = false;
};

struct ChannelParams {
  double fiber_length_km = 0.0;
  double beta2_ps2_per_km = 0.0;

  void validate() const {
    detail::require(fiber_length_km >= 0.0, "fiber_length_km must be >= 0");
    detail::require(std::isfinite(beta2_ps2_per_km), "beta2 must be finite");
  }
};

struct DetectionParams {
  double window_half_width_ps = 1.0;
  double eta = 0.5;

  void validate() const {
    detail::require(window_half_width_ps > 0.0, "window half-width must be > 0");
    detail::require(eta >= 0.0 && eta <= 1.0, "eta must lie in [0, 1]");
  }
};

/// A sampled coincidence curve. Delays strictly increase and values are
/// nonnegative; the constructor enforces both.
class HomCurve {
 public:
  HomCurve() = default;

  HomCurve(std::vector<double> tau_ps, std::vector<double> values)
      : tau_ps_(std::move(tau_ps)), values_(std::move(values)) {
    if (tau_ps_.size() != values_.size())
      throw PreconditionError("HomCurve: delay and value sequences differ in length");
    for (std::size_t i = 0; i < tau_ps_.size(); ++i) {
      if (!std::isfinite(tau_ps_[i]) || !std::isfinite(values_[i]))
        throw PreconditionError("HomCurve: non-finite entry at index " + std::to_string(i));
      if (values_[i] < 0.0)
        throw PreconditionError("HomCurve: negative value at index " + std::to_string(i));
      if (i > 0 && !(tau_ps_[i] > tau_ps_[i - 1]))
        throw PreconditionError("HomCurve: delays not strictly increasing at index " +
                                std::to_string(i));
    }
  }

  std::span<const double> tau_ps() const noexcept { return tau_ps_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return tau_ps_.size(); }
  bool empty() const noexcept { return tau_ps_.empty(); }

  friend bool operator==(const HomCurve&, const HomCurve&) = default;

 private:
  std::vector<double> tau_ps_;
  std::vector<double> values_;
};

/// `count` evenly spaced delays on [lo, hi]. Samples are placed
/// symmetrically about the midpoint, so a symmetric range gives an exactly
/// antisymmetric grid (and hits 0 for odd counts).
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const auto denom = static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const double k = 2.0 * static_cast<double>(i) - denom;
    out[i] = center + half * (k / denom);
  }
  return out;
}

}  // namespace disphom
