#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "disphom/coincidence.hpp"
#include "disphom/constants.hpp"
#include "disphom/errors.hpp"
#include "disphom/fitting.hpp"
#include "disphom/random.hpp"
#include "disphom/spectral.hpp"
#include "disphom/types.hpp"

namespace disphom {

struct TauGrid {
  double min_ps = -30.0;
  double max_ps = 30.0;
  std::size_t points = 201;

  void validate() const {
    detail::require(std::isfinite(min_ps) && std::isfinite(max_ps) && max_ps > min_ps,
                    "TauGrid: need finite min_ps < max_ps");
    detail::require(points >= 2, "TauGrid: need at least two points");
  }

  std::vector<double> samples() const { return linspace(min_ps, max_ps, points); }

  /// +-1.5 T with 201 points.
  static TauGrid around_window(double window_half_width_ps) {
    return {-1.5 * window_half_width_ps, 1.5 * window_half_width_ps, 201};
  }
};

/// A grid of (fiber length, window) configurations to simulate.
///
/// rho comes from `rho_ps2_inv` when set, otherwise from the source and
/// filter. `etas` holds either one value for every dataset or one per
/// dataset in generation order (fiber length outer, window inner). Without
/// an explicit `tau_grid` each dataset is sampled on TauGrid::around_window.
struct CampaignConfig {
  std::optional<SourceParams> source;
  FilterParams filter;
  std::optional<double> rho_ps2_inv;
  double beta2_ps2_per_km = 21.39;
  std::vector<double> fiber_lengths_km;
  std::vector<double> windows_ps;
  std::vector<double> etas{0.5};
  std::optional<TauGrid> tau_grid;
  double peak_counts = 1e4;
  std::uint64_t seed = 1;

  std::size_t dataset_count() const { return fiber_lengths_km.size() * windows_ps.size(); }

  double rho() const {
    if (rho_ps2_inv) return *rho_ps2_inv;
    if (!source) throw PreconditionError("CampaignConfig: need rho_ps2_inv or a source description");
    return derive_spectral(*source, filter).rho;
  }

  double eta_for(std::size_t index) const { return etas.size() == 1 ? etas.front() : etas.at(index); }

  TauGrid grid_for(double window_ps) const { return tau_grid ? *tau_grid : TauGrid::around_window(window_ps); }

  void validate() const {
    detail::require(!fiber_lengths_km.empty() && !windows_ps.empty(),
                    "CampaignConfig: need at least one fiber length and one window");
    for (const double l : fiber_lengths_km) detail::require(l >= 0.0, "CampaignConfig: fiber lengths must be >= 0");
    for (const double t : windows_ps) detail::require(t > 0.0, "CampaignConfig: windows must be > 0");
    detail::require(etas.size() == 1 || etas.size() == dataset_count(),
                    "CampaignConfig: etas must hold one value or one per dataset");
    for (const double e : etas) detail::require(e >= 0.0 && e <= 1.0, "CampaignConfig: eta outside [0, 1]");
    detail::require(peak_counts > 0.0, "CampaignConfig: peak_counts must be > 0");
    detail::require(rho() > 0.0, "CampaignConfig: rho must be > 0");
    if (tau_grid) tau_grid->validate();
  }
};

inline std::string dataset_label(std::size_t index, double fiber_length_km, double window_ps) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "ds%03zu_L%.3fkm_T%.3fns", index, fiber_length_km,
                window_ps / constants::ps_per_ns);
  return buf;
}

/// Noise-free expected counts: the closed-form rate scaled so the
/// no-interference plateau equals `peak_counts`.
inline std::vector<double> expected_counts(std::span<const double> tau_ps, double rho, double beta2,
                                           double fiber_length_km, double window_ps, double eta,
                                           double peak_counts) {
  const RateParams rate = make_rate_params(rho, {fiber_length_km, beta2}, {window_ps, eta});
  std::vector<double> mean(tau_ps.size());
  coincidence_values(tau_ps, rate, mean);
  const double scale = peak_counts / plateau_level(rate);
  for (double& m : mean) m *= scale;
  return mean;
}

/// One Poisson-noised dataset per (fiber length, window) pair. Dataset k
/// draws from Philox stream k under the campaign seed, so output is a pure
/// function of the config.
inline std::vector<Dataset> generate_synthetic(const CampaignConfig& config) {
  config.validate();
  const double rho = config.rho();
  std::vector<Dataset> out;
  out.reserve(config.dataset_count());
  std::size_t index = 0;
  for (const double length : config.fiber_lengths_km) {
    for (const double window : config.windows_ps) {
      const auto tau = config.grid_for(window).samples();
      const auto mean = expected_counts(tau, rho, config.beta2_ps2_per_km, length, window,
                                        config.eta_for(index), config.peak_counts);
      RandomStream rng(config.seed, index);
      std::vector<double> counts(mean.size());
      for (std::size_t i = 0; i < mean.size(); ++i) counts[i] = static_cast<double>(poisson_sample(mean[i], rng));
      out.push_back({HomCurve(tau, std::move(counts)), window, length, dataset_label(index, length, window)});
      ++index;
    }
  }
  return out;
}

}  // namespace disphom
