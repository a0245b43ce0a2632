#pragma once

// Brute-force reference for the windowed coincidence rate: build the
// difference-coordinate amplitude in the time domain, form the two-path
// interference density c(tau, sigma) pointwise, and integrate it over the
// coincidence window numerically. The numeric route shares no code with
// coincidence.hpp; compare_to_closed_form puts the two side by side.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "disphom/coincidence.hpp"
#include "disphom/constants.hpp"
#include "disphom/errors.hpp"
#include "disphom/parallel.hpp"
#include "disphom/quadrature.hpp"
#include "disphom/scale.hpp"
#include "disphom/types.hpp"

namespace disphom::oracle {

/// Spectral width plus the accumulated dispersion L * beta2.
struct AmplitudeParams {
  double rho = 1.0;
  double fiber_length_km = 0.0;
  double beta2_ps2_per_km = 0.0;

  double dispersion_ps2() const { return fiber_length_km * beta2_ps2_per_km; }

  void validate() const {
    detail::require(rho > 0.0, "oracle: rho must be > 0");
    detail::require(fiber_length_km >= 0.0, "oracle: fiber length must be >= 0");
  }
};

/// Difference-frequency amplitude after the fiber, normalized to unit L2
/// norm over omega: (pi rho)^(-1/4) exp(-w^2 / 2rho - i L beta2 w^2 / 2).
inline ComplexValue beta_minus_frequency(double omega, const AmplitudeParams& p) {
  p.validate();
  const double mag = std::pow(constants::pi * p.rho, -0.25) * std::exp(-omega * omega / (2.0 * p.rho));
  const double phase = -0.5 * p.dispersion_ps2() * omega * omega;
  return mag * ComplexValue(std::cos(phase), std::sin(phase));
}

/// Time-domain amplitude, the unitary Fourier transform of
/// beta_minus_frequency: with a = (1/rho + i L beta2)/2,
/// (pi rho)^(-1/4) (2a)^(-1/2) exp(-t^2 / 4a). Unit L2 norm over t.
class TimeAmplitude {
 public:
  explicit TimeAmplitude(const AmplitudeParams& p) {
    p.validate();
    const double chirp = p.dispersion_ps2() * p.rho;
    // 1/(4a) = rho (1 - i chirp) / (2 (1 + chirp^2))
    const double denom = 2.0 * (1.0 + chirp * chirp);
    inv_four_a_ = ComplexValue(p.rho / denom, -p.rho * chirp / denom);
    prefactor_ = std::pow(constants::pi * p.rho, -0.25) / std::sqrt(ComplexValue(1.0 / p.rho, p.dispersion_ps2()));
  }

  ComplexValue operator()(double t_ps) const { return prefactor_ * std::exp(-t_ps * t_ps * inv_four_a_); }

 private:
  ComplexValue inv_four_a_;
  ComplexValue prefactor_;
};

inline ComplexValue beta_minus_time(double t_ps, const AmplitudeParams& p) {
  return TimeAmplitude(p)(t_ps);
}

/// Coincidence density at intra-window delay sigma for arm delay tau:
/// (1/sqrt 2) |eta b((tau+sigma)/sqrt 2) - (1-eta) b((tau-sigma)/sqrt 2)|^2.
inline double differential_rate(double tau_ps, double sigma_ps, double eta, const TimeAmplitude& amp) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const ComplexValue a = amp((tau_ps + sigma_ps) * inv_sqrt2);
  const ComplexValue b = amp((tau_ps - sigma_ps) * inv_sqrt2);
  return inv_sqrt2 * std::norm(eta * a - (1.0 - eta) * b);
}

inline double differential_rate(double tau_ps, double sigma_ps, double eta, const AmplitudeParams& p) {
  detail::require(eta >= 0.0 && eta <= 1.0, "differential_rate: eta must lie in [0, 1]");
  return differential_rate(tau_ps, sigma_ps, eta, TimeAmplitude(p));
}

/// Segment boundaries on [-T, T] that bracket the features of the density:
/// the direct peaks at sigma = -tau and sigma = +tau and the interference
/// envelope at sigma = 0, each of width 1/sqrt(rho').
///
/// The interference term oscillates in sigma at L beta2 rho rho' |tau|
/// rad/ps. Wherever its envelope exp(-rho'(tau^2 + sigma^2)/2) exceeds
/// ~1e-12 the window is cut into one-period segments, otherwise adaptive
/// Simpson can alias and accept a wrong estimate on a coarse level.
inline std::vector<double> window_breakpoints(double tau_ps, double window_half_width_ps,
                                              const AmplitudeParams& p) {
  const double t = window_half_width_ps;
  const double chirp = p.dispersion_ps2() * p.rho;
  const double rho_prime = p.rho / (1.0 + chirp * chirp);
  const double width = 1.0 / std::sqrt(rho_prime);
  std::vector<double> pts{-t, t};
  constexpr double offsets[] = {-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0};
  for (const double centre : {-tau_ps, 0.0, tau_ps}) {
    for (const double k : offsets) {
      const double x = centre + k * width;
      if (x > -t && x < t) pts.push_back(x);
    }
  }

  constexpr double envelope_log_floor = 28.0;  // exp(-28) ~ 7e-13
  constexpr std::size_t max_periods = 1u << 20;
  const double omega = std::abs(chirp) * rho_prime * std::abs(tau_ps);
  const double reach2 = 2.0 * envelope_log_floor / rho_prime - tau_ps * tau_ps;
  if (omega > 0.0 && reach2 > 0.0) {
    const double reach = std::min(std::sqrt(reach2), t);
    const double period = 2.0 * constants::pi / omega;
    const auto count = static_cast<std::size_t>(std::ceil(2.0 * reach / period));
    if (count > 1 && count <= max_periods) {
      for (const double x : linspace(-reach, reach, count + 1))
        if (x > -t && x < t) pts.push_back(x);
    }
  }

  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

/// c(tau) = integral over sigma in [-T, T] of differential_rate.
inline QuadratureResult windowed_rate_numeric(double tau_ps, double window_half_width_ps, double eta,
                                              const AmplitudeParams& p,
                                              const QuadratureSpec& spec = {}) {
  detail::require(window_half_width_ps > 0.0, "windowed_rate_numeric: T must be > 0");
  p.validate();
  detail::require(eta >= 0.0 && eta <= 1.0, "windowed_rate_numeric: eta must lie in [0, 1]");
  const auto bp = window_breakpoints(tau_ps, window_half_width_ps, p);
  const TimeAmplitude amp(p);
  auto density = [&](double sigma) { return differential_rate(tau_ps, sigma, eta, amp); };
  return integrate(density, bp, spec);
}

struct OracleComparison {
  std::vector<double> tau_ps;
  std::vector<double> numeric;  // quadrature of the density
  std::vector<double> closed;   // closed-form rate
  std::vector<double> error_bounds;
  double scale = 1.0;           // numeric is multiplied by this before comparing
  double plateau = 0.0;
  double max_deviation = 0.0;
  double max_deviation_tau_ps = 0.0;
};

/// Evaluates both routes on a delay grid, matches them with one profiled
/// scale, and reports the worst deviation. Each point is compared relative
/// to max(closed, 1e-9 * plateau), so values deep in the tails are judged
/// against a floor rather than their own size.
inline OracleComparison compare_to_closed_form(std::span<const double> tau_ps, double rho,
                                               const ChannelParams& channel,
                                               const DetectionParams& detection,
                                               const QuadratureSpec& spec = {}) {
  const RateParams rate = make_rate_params(rho, channel, detection);
  const AmplitudeParams amp{rho, channel.fiber_length_km, channel.beta2_ps2_per_km};

  OracleComparison out;
  out.tau_ps.assign(tau_ps.begin(), tau_ps.end());
  const std::size_t n = tau_ps.size();
  out.numeric.resize(n);
  out.closed.resize(n);
  out.error_bounds.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto q = windowed_rate_numeric(tau_ps[i], detection.window_half_width_ps, detection.eta, amp, spec);
    out.numeric[i] = q.value;
    out.error_bounds[i] = q.error_bound;
    out.closed[i] = coincidence_rate(tau_ps[i], rate);
  });
  if (n == 0) return out;

  out.plateau = plateau_level(rate);
  out.scale = profile_scale(out.numeric, out.closed);
  const double floor = 1e-9 * out.plateau;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = std::abs(out.scale * out.numeric[i] - out.closed[i]) / std::max(out.closed[i], floor);
    if (dev > out.max_deviation) {
      out.max_deviation = dev;
      out.max_deviation_tau_ps = tau_ps[i];
    }
  }
  return out;
}

struct SincGaussianReport {
  double max_deviation = 0.0;
  double at_x = 0.0;
};

/// Largest |sinc(x) - exp(-x^2/6)| on a dense uniform scan of [lo, hi].
inline SincGaussianReport sinc_gaussian_check(double lo, double hi, std::size_t samples = 200001) {
  detail::require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, "sinc_gaussian_check: bad range");
  detail::require(samples >= 2, "sinc_gaussian_check: need at least two samples");
  SincGaussianReport out;
  for (const double x : linspace(lo, hi, samples)) {
    const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
    const double dev = std::abs(sinc - std::exp(-x * x / 6.0));
    if (dev > out.max_deviation) {
      out.max_deviation = dev;
      out.at_x = x;
    }
  }
  return out;
}

}  // namespace disphom::oracle
