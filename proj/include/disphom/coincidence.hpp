#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "disphom/constants.hpp"
#include "disphom/errors.hpp"
#include "disphom/faddeeva.hpp"
#include "disphom/spectral.hpp"
#include "disphom/types.hpp"

namespace disphom {

/// Everything the windowed coincidence rate depends on.
struct RateParams {
  double rho = 1.0;        // ps^-2
  double rho_prime = 1.0;  // ps^-2, after dispersive broadening
  double eta_prime = 0.0;
  double window_half_width_ps = 1.0;

  void validate() const {
    detail::require(rho_prime > 0.0, "coincidence rate: rho' must be > 0");
    detail::require(rho >= rho_prime, "coincidence rate: rho must be >= rho'");
    detail::require(eta_prime >= 0.0 && eta_prime <= 1.0,
                    "coincidence rate: eta' must lie in [0, 1]");
    detail::require(window_half_width_ps > 0.0, "coincidence rate: T must be > 0");
  }
};

inline RateParams make_rate_params(double rho, const ChannelParams& channel,
                                   const DetectionParams& detection) {
  detection.validate();
  return {rho, broadened_rho(rho, channel), eta_prime(detection.eta),
          detection.window_half_width_ps};
}

namespace detail {

// erf(a) + erf(b) without losing the small difference when the two terms
// nearly cancel in the tails.
inline double erf_pair_sum(double a, double b) {
  if (a > 0.0 && b < 0.0) return std::erfc(-b) - std::erfc(a);
  if (a < 0.0 && b > 0.0) return std::erfc(-a) - std::erfc(b);
  return std::erf(a) + std::erf(b);
}

}  // namespace detail

/// Windowed HOM coincidence rate c(tau) for a rectangular window [-T, T].
///
///   c = (1+eta')/4 [erf(k (T+tau)) + erf(k (T-tau))]
///     - (1-eta')/2 exp(-rho tau^2/2) Re erf(k T + i q tau)
///
/// with k = sqrt(rho'/2), q = sqrt((rho-rho')/2). The second term is
/// evaluated as exp(-rho' tau^2/2) * scaled_dip_term(kT, q tau), since
/// rho tau^2/2 = rho' tau^2/2 + (q tau)^2 and the unscaled erf overflows.
inline double coincidence_rate(double tau_ps, const RateParams& p) {
  p.validate();
  const double t = p.window_half_width_ps;
  const double k = std::sqrt(0.5 * p.rho_prime);
  const double q = std::sqrt(0.5 * (p.rho - p.rho_prime));
  const double a = std::abs(tau_ps);

  const double direct = 0.25 * (1.0 + p.eta_prime) * detail::erf_pair_sum(k * (t + a), k * (t - a));
  const double envelope = std::exp(-0.5 * p.rho_prime * a * a);
  const double cross =
      envelope == 0.0 ? 0.0 : 0.5 * (1.0 - p.eta_prime) * envelope * scaled_dip_term(k * t, q * a);
  // The exact value integrates |amplitude|^2; only rounding can go below 0.
  return std::max(0.0, direct - cross);
}

inline double coincidence_rate(double tau_ps, double rho, double rho_prime, double eta_prime,
                               double window_half_width_ps) {
  return coincidence_rate(tau_ps, RateParams{rho, rho_prime, eta_prime, window_half_width_ps});
}

/// Rate level without two-photon interference at tau = 0; the curve
/// approaches it away from the dip while |tau| << T.
inline double plateau_level(const RateParams& p) {
  p.validate();
  return 0.5 * (1.0 + p.eta_prime) * std::erf(std::sqrt(0.5 * p.rho_prime) * p.window_half_width_ps);
}

inline void coincidence_values(std::span<const double> tau_ps, const RateParams& p,
                               std::span<double> out) {
  detail::require(out.size() == tau_ps.size(), "coincidence_values: output size mismatch");
  p.validate();
  for (std::size_t i = 0; i < tau_ps.size(); ++i) out[i] = coincidence_rate(tau_ps[i], p);
}

inline HomCurve coincidence_curve(std::span<const double> tau_ps, const RateParams& p) {
  p.validate();
  std::vector<double> grid(tau_ps.begin(), tau_ps.end());
  std::vector<double> values(grid.size());
  coincidence_values(grid, p, values);
  return HomCurve(std::move(grid), std::move(values));
}

/// Approximate period of the window-induced side lobes,
/// 2 pi / (T sqrt(rho' (rho - rho'))).
inline double oscillation_period(double rho, double rho_prime, double window_half_width_ps) {
  detail::require(rho_prime > 0.0 && rho >= rho_prime, "oscillation_period: need rho >= rho' > 0");
  detail::require(window_half_width_ps > 0.0, "oscillation_period: T must be > 0");
  const double gap = rho - rho_prime;
  if (!(gap > 0.0)) throw DomainError("no oscillations without dispersion (rho == rho')");
  return 2.0 * constants::pi / (window_half_width_ps * std::sqrt(rho_prime * gap));
}

}  // namespace disphom
