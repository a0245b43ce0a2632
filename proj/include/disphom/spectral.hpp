#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "disphom/constants.hpp"
#include "disphom/errors.hpp"
#include "disphom/types.hpp"

namespace disphom {

struct GammaPair {
  double signal = 0.0;  // ps/mm
  double idler = 0.0;   // ps/mm
};

/// Inverse group-velocity mismatch between pump and each daughter photon,
/// gamma_a = delta_ng_a / c. Signs follow the group-index differences.
inline GammaPair derive_gammas(const SourceParams& source) {
  source.validate();
  return {source.delta_ng_signal / constants::c_mm_per_ps,
          source.delta_ng_idler / constants::c_mm_per_ps};
}

struct EpmCheck {
  double mismatch = 0.0;  // |gamma_i + gamma_s| / max(|gamma_i|, |gamma_s|)
  bool satisfied = false;
};

inline constexpr double default_epm_tolerance = 0.15;

/// Extended phase matching holds when gamma_i ~ -gamma_s.
inline EpmCheck check_epm(double gamma_signal, double gamma_idler,
                          double rel_tol = default_epm_tolerance) {
  detail::require(rel_tol > 0.0, "check_epm: rel_tol must be > 0");
  const double scale = std::max(std::abs(gamma_signal), std::abs(gamma_idler));
  if (scale == 0.0) throw DomainError("degenerate phase matching: both gammas are zero");
  const double mismatch = std::abs(gamma_signal + gamma_idler) / scale;
  return {mismatch, mismatch <= rel_tol};
}

/// Angular-frequency FWHM (rad/ps) of a bandpass given in wavelength.
inline double filter_fwhm_radps(const FilterParams& filter) {
  filter.validate();
  const double lambda = filter.center_wavelength_nm;
  return 2.0 * constants::pi * constants::c_nm_per_ps * filter.fwhm_nm / (lambda * lambda);
}

/// Variance scale s of the Gaussian filter F(w) ~ exp(-(w - w_f)^2 / 2s).
///
/// FieldLevel puts the bandpass FWHM on |F|, IntensityLevel on |F|^2; the
/// latter is exactly twice the former.
inline double filter_variance(const FilterParams& filter) {
  const double dw = filter_fwhm_radps(filter);
  switch (filter.convention) {
    case FilterConvention::FieldLevel:
      return dw * dw / (8.0 * constants::ln2);
    case FilterConvention::IntensityLevel:
      return dw * dw / (4.0 * constants::ln2);
  }
  return dw * dw / (8.0 * constants::ln2);
}

/// Harmonic combination 1/rho = 1/r + 1/s. An infinite s gives rho = r.
inline double combine_variances(double r, double s) {
  detail::require(r > 0.0 && s > 0.0, "combine_variances: r and s must be > 0");
  if (std::isinf(s)) return r;
  if (std::isinf(r)) return s;
  return (r * s) / (r + s);
}

/// Full crystal + filter chain down to the difference-frequency width rho.
inline DerivedSpectral derive_spectral(const SourceParams& source, const FilterParams& filter) {
  source.validate();
  filter.validate();
  const auto gammas = derive_gammas(source);
  const double d = source.crystal_length_mm;

  DerivedSpectral out;
  out.gamma_signal = gammas.signal;
  out.gamma_idler = gammas.idler;

  const double diff = (gammas.idler - gammas.signal) * d;
  if (diff == 0.0) throw DomainError("r undefined (degenerate difference bandwidth)");
  out.r = 24.0 / (diff * diff);

  const double sum = gammas.idler + gammas.signal;
  if (sum == 0.0) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    out.pure_epm = true;
    out.sigma_pm = inf;
    out.gamma_tilde_signal = gammas.signal >= 0.0 ? inf : -inf;
    out.gamma_tilde_idler = gammas.idler >= 0.0 ? inf : -inf;
  } else {
    out.sigma_pm = 4.0 * std::sqrt(6.0) / (sum * d);
    out.gamma_tilde_signal = 2.0 * gammas.signal / sum;
    out.gamma_tilde_idler = 2.0 * gammas.idler / sum;
  }

  out.r_p = source.pump_sigma_radps * source.pump_sigma_radps / 4.0;
  out.s = filter_variance(filter);
  out.rho = combine_variances(out.r, out.s);
  return out;
}

/// Width after propagation: rho' = rho / (1 + (L beta2 rho)^2).
inline double broadened_rho(double rho, const ChannelParams& channel) {
  detail::require(rho > 0.0, "broadened_rho: rho must be > 0");
  channel.validate();
  const double chirp = channel.fiber_length_km * channel.beta2_ps2_per_km * rho;
  return rho / (1.0 + chirp * chirp);
}

/// Visibility constant (2 eta - 1)^2; symmetric about eta = 1/2.
inline double eta_prime(double eta) {
  detail::require(eta >= 0.0 && eta <= 1.0, "eta_prime: eta must lie in [0, 1]");
  const double u = 2.0 * eta - 1.0;
  return u * u;
}

struct GroupIndexBounds {
  double low = 0.0;
  double high = 0.0;
};

/// |delta n_g| implied by a fitted rho under EPM symmetry, for one filter
/// convention. Inverts 1/rho = 1/r + 1/s, then r = 24 / ((gamma_i - gamma_s) d)^2.
inline double group_index_from_rho(double rho, double s, double crystal_length_mm) {
  detail::require(rho > 0.0, "group_index_from_rho: rho must be > 0");
  detail::require(crystal_length_mm > 0.0, "group_index_from_rho: crystal length must be > 0");
  if (!(rho < s)) throw DomainError("filter narrower than fitted spectrum (rho >= s)");
  const double inv_r = std::isinf(s) ? 1.0 / rho : (s - rho) / (rho * s);
  const double gamma_diff = std::sqrt(24.0 * inv_r) / crystal_length_mm;
  return constants::c_mm_per_ps * gamma_diff / 2.0;
}

/// The pair of group-index estimates obtained from the FieldLevel and
/// IntensityLevel readings of the same filter, returned in ascending order.
inline GroupIndexBounds group_index_bounds(double rho, FilterParams filter,
                                           double crystal_length_mm) {
  filter.convention = FilterConvention::FieldLevel;
  const double field = group_index_from_rho(rho, filter_variance(filter), crystal_length_mm);
  filter.convention = FilterConvention::IntensityLevel;
  const double intensity =
      group_index_from_rho(rho, filter_variance(filter), crystal_length_mm);
  return {std::min(field, intensity), std::max(field, intensity)};
}

}  // namespace disphom
