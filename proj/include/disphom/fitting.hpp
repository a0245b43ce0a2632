#pragma once

// Global least-squares fit of the windowed coincidence model to many
// datasets at once. Shared parameters: beta2 and rho. Per dataset: the
// beam-splitter reflectivity eta_i, plus an amplitude scale that is
// profiled out in closed form at every evaluation, so the optimizer never
// sees it and its dependence on the other parameters is carried into the
// Jacobian automatically.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "disphom/coincidence.hpp"
#include "disphom/errors.hpp"
#include "disphom/parallel.hpp"
#include "disphom/scale.hpp"
#include "disphom/spectral.hpp"
#include "disphom/types.hpp"

namespace disphom {

struct Dataset {
  HomCurve curve;
  double window_half_width_ps = 1.0;
  double fiber_length_km = 0.0;
  std::string label;

  void validate() const {
    detail::require(window_half_width_ps > 0.0, "Dataset: window half-width must be > 0");
    detail::require(fiber_length_km >= 0.0, "Dataset: fiber length must be >= 0");
  }
};

struct FitParams {
  double beta2_ps2_per_km = 20.0;
  double rho_ps2_inv = 1.0;
  std::vector<double> etas;
};

/// Reflectivity folded onto [1/2, 1]; the model only sees (2 eta - 1)^2.
inline double canonical_eta(double eta) { return std::max(eta, 1.0 - eta); }

enum class Weighting {
  Unweighted,  // plain sum of squares
  Poisson,     // residuals divided by sqrt(max(y, 1))
};

struct FitOptions {
  int max_iterations = 200;
  double initial_lambda = 1e-3;
  double lambda_factor = 10.0;
  double max_lambda = 1e16;
  double rel_loss_tol = 1e-10;
  double fd_rel_step = 1e-6;
  double singular_rcond = 1e-12;
  Weighting weighting = Weighting::Unweighted;
};

struct RmsreReport {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // zero-count bins
};

/// Root mean square relative error sqrt(sum (r/y)^2 / N) over bins with
/// y > 0. Zero bins are skipped and counted.
inline RmsreReport rmsre(std::span<const double> residuals, std::span<const double> data) {
  detail::require(residuals.size() == data.size(), "rmsre: size mismatch");
  RmsreReport out;
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] > 0.0) {
      const double rel = residuals[i] / data[i];
      acc += rel * rel;
      ++out.used;
    } else {
      ++out.excluded;
    }
  }
  if (out.used == 0) throw DomainError("rmsre: no valid points (all data values are zero)");
  out.value = std::sqrt(acc / static_cast<double>(out.used));
  return out;
}

struct LossEvaluation {
  double total = 0.0;
  std::vector<std::vector<double>> residuals;  // per dataset, s0 f - y (weighted if requested)
  std::vector<std::vector<double>> model;      // per dataset, unscaled f
  std::vector<double> scales;
};

namespace detail {

inline std::vector<double> dataset_weights(const Dataset& d, Weighting w) {
  const auto y = d.curve.values();
  std::vector<double> out(y.size(), 1.0);
  if (w == Weighting::Poisson)
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = 1.0 / std::max(y[i], 1.0);
  return out;
}

struct DatasetEval {
  std::vector<double> residuals;
  std::vector<double> model;
  double scale = 0.0;
};

inline DatasetEval evaluate_dataset(const Dataset& d, double rho, double beta2, double eta,
                                    std::span<const double> weights) {
  const RateParams rate =
      make_rate_params(rho, ChannelParams{d.fiber_length_km, beta2}, DetectionParams{d.window_half_width_ps, eta});
  const auto tau = d.curve.tau_ps();
  const auto y = d.curve.values();
  DatasetEval out;
  out.model.resize(tau.size());
  coincidence_values(tau, rate, out.model);
  out.scale = profile_scale(out.model, y, weights);
  out.residuals.resize(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i)
    out.residuals[i] = std::sqrt(weights[i]) * (out.scale * out.model[i] - y[i]);
  return out;
}

inline double sum_of_squares(std::span<const double> r) {
  double acc = 0.0;
  for (const double v : r) acc += v * v;
  return acc;
}

// Internal coordinates: [log rho, beta2 / 10, v_1 .. v_m] with
// eta_i = 1/2 + logistic(v_i) / 2.
inline constexpr double beta2_unit = 10.0;
inline constexpr double eta_margin = 1e-12;

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline double eta_from_internal(double v) { return 0.5 + 0.5 * logistic(v); }

inline double eta_to_internal(double eta) {
  const double frac = std::clamp(2.0 * canonical_eta(eta) - 1.0, eta_margin, 1.0 - eta_margin);
  return std::log(frac / (1.0 - frac));
}

inline Eigen::VectorXd to_internal(const FitParams& p) {
  Eigen::VectorXd u(2 + static_cast<Eigen::Index>(p.etas.size()));
  u[0] = std::log(p.rho_ps2_inv);
  u[1] = p.beta2_ps2_per_km / beta2_unit;
  for (std::size_t i = 0; i < p.etas.size(); ++i) u[2 + static_cast<Eigen::Index>(i)] = eta_to_internal(p.etas[i]);
  return u;
}

inline FitParams from_internal(const Eigen::VectorXd& u) {
  FitParams p;
  p.rho_ps2_inv = std::exp(u[0]);
  p.beta2_ps2_per_km = u[1] * beta2_unit;
  p.etas.resize(static_cast<std::size_t>(u.size() - 2));
  for (std::size_t i = 0; i < p.etas.size(); ++i) p.etas[i] = eta_from_internal(u[2 + static_cast<Eigen::Index>(i)]);
  return p;
}

}  // namespace detail

/// Scale-agnostic loss: sum over datasets of min_s sum_x (s f(x) - y_x)^2.
inline LossEvaluation global_loss(const FitParams& params, std::span<const Dataset> datasets,
                                  Weighting weighting = Weighting::Unweighted) {
  detail::require(params.rho_ps2_inv > 0.0, "global_loss: rho must be > 0");
  detail::require(params.etas.size() == datasets.size(), "global_loss: need one eta per dataset");
  LossEvaluation out;
  const std::size_t m = datasets.size();
  out.residuals.resize(m);
  out.model.resize(m);
  out.scales.resize(m);
  parallel_for(m, [&](std::size_t i) {
    datasets[i].validate();
    const auto w = detail::dataset_weights(datasets[i], weighting);
    auto e = detail::evaluate_dataset(datasets[i], params.rho_ps2_inv, params.beta2_ps2_per_km, params.etas[i], w);
    out.residuals[i] = std::move(e.residuals);
    out.model[i] = std::move(e.model);
    out.scales[i] = e.scale;
  });
  for (std::size_t i = 0; i < m; ++i) out.total += detail::sum_of_squares(out.residuals[i]);
  return out;
}

struct FitResult {
  FitParams params;
  double beta2_uncertainty = 0.0;  // 1 sigma, ps^2/km
  double rho_uncertainty = 0.0;    // 1 sigma, ps^-2
  std::vector<double> eta_uncertainties;
  std::vector<double> scales;
  std::vector<RmsreReport> rmsre;
  // Order: beta2, rho, eta_1 .. eta_m (physical units).
  Eigen::MatrixXd covariance;
  double condition_number = 0.0;  // of J^T J in internal coordinates
  bool near_singular = false;     // pseudo-inverse used for the covariance
  double loss = 0.0;
  std::vector<double> loss_history;  // initial loss, then each accepted step
  std::size_t points = 0;
  std::size_t free_parameters = 0;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
};

namespace detail {

class GlobalProblem {
 public:
  GlobalProblem(std::span<const Dataset> datasets, const FitOptions& options)
      : datasets_(datasets), options_(options) {
    weights_.reserve(datasets.size());
    for (const auto& d : datasets) {
      d.validate();
      weights_.push_back(dataset_weights(d, options.weighting));
      offsets_.push_back(rows_);
      rows_ += d.curve.size();
    }
  }

  std::size_t rows() const { return rows_; }
  Eigen::Index cols() const { return 2 + static_cast<Eigen::Index>(datasets_.size()); }

  // Stacked residuals; throws on parameter-domain violations.
  Eigen::VectorXd residuals(const Eigen::VectorXd& u, std::vector<double>* scales = nullptr) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(rows_));
    std::vector<double> s(datasets_.size());
    const double rho = std::exp(u[0]);
    const double beta2 = u[1] * beta2_unit;
    parallel_for(datasets_.size(), [&](std::size_t i) {
      const auto e = evaluate_dataset(datasets_[i], rho, beta2, eta_from_internal(u[col(i)]), weights_[i]);
      for (std::size_t k = 0; k < e.residuals.size(); ++k) r[static_cast<Eigen::Index>(offsets_[i] + k)] = e.residuals[k];
      s[i] = e.scale;
    });
    if (scales) *scales = std::move(s);
    return r;
  }

  // Central differences; each dataset block only depends on the shared
  // columns and its own eta column.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& u) const {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), cols());
    parallel_for(datasets_.size(), [&](std::size_t i) {
      const Eigen::Index own[3] = {0, 1, col(i)};
      for (const Eigen::Index j : own) {
        const double h = options_.fd_rel_step * std::max(1.0, std::abs(u[j]));
        Eigen::VectorXd up = u, down = u;
        up[j] += h;
        down[j] -= h;
        const auto rp = block(i, up);
        const auto rm = block(i, down);
        for (std::size_t k = 0; k < rp.size(); ++k)
          jac(static_cast<Eigen::Index>(offsets_[i] + k), j) = (rp[k] - rm[k]) / (2.0 * h);
      }
    });
    return jac;
  }

 private:
  Eigen::Index col(std::size_t i) const { return 2 + static_cast<Eigen::Index>(i); }

  std::vector<double> block(std::size_t i, const Eigen::VectorXd& u) const {
    return evaluate_dataset(datasets_[i], std::exp(u[0]), u[1] * beta2_unit, eta_from_internal(u[col(i)]), weights_[i])
        .residuals;
  }

  std::span<const Dataset> datasets_;
  FitOptions options_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::size_t> offsets_;
  std::size_t rows_ = 0;
};

}  // namespace detail

/// Levenberg-Marquardt fit of the shared (beta2, rho) and per-dataset eta.
///
/// Marquardt-scaled damping (J^T J + lambda diag(J^T J)); lambda starts at
/// options.initial_lambda and is divided/multiplied by lambda_factor on
/// accepted/rejected steps. Accepted steps never increase the loss. The
/// covariance is (J^T J)^-1 * sum r^2 / (n - p) at the solution, with p the
/// number of free parameters (the profiled scales are not counted).
///
/// Non-convergence is reported through FitResult::converged, never thrown.
inline FitResult lm_fit(std::span<const Dataset> datasets, const FitParams& init, const FitOptions& options = {}) {
  detail::require(!datasets.empty(), "lm_fit: need at least one dataset");
  detail::require(init.etas.size() == datasets.size(), "lm_fit: need one initial eta per dataset");
  detail::require(init.rho_ps2_inv > 0.0 && std::isfinite(init.beta2_ps2_per_km), "lm_fit: invalid initial parameters");
  for (const double eta : init.etas) detail::require(eta >= 0.0 && eta <= 1.0, "lm_fit: initial eta outside [0, 1]");

  const detail::GlobalProblem problem(datasets, options);
  const auto p = static_cast<std::size_t>(problem.cols());
  const std::size_t n = problem.rows();
  detail::require(n >= p + 1, "lm_fit: need more data points than free parameters");

  double data_norm = 0.0;
  for (const auto& d : datasets)
    for (const double y : d.curve.values()) data_norm += y * y;

  FitResult result;
  result.points = n;
  result.free_parameters = p;

  Eigen::VectorXd u = detail::to_internal(init);
  Eigen::VectorXd r = problem.residuals(u);
  double loss = r.squaredNorm();
  result.loss_history.push_back(loss);
  double lambda = options.initial_lambda;

  auto try_residuals = [&](const Eigen::VectorXd& trial, Eigen::VectorXd& out) {
    if (!trial.allFinite()) return false;
    try {
      out = problem.residuals(trial);
    } catch (const Error&) {
      return false;
    }
    return out.allFinite();
  };

  bool done = false;
  while (!done && result.iterations < options.max_iterations) {
    if (loss <= 1e-28 * data_norm) {
      result.converged = true;
      result.stop_reason = "zero residual";
      break;
    }
    ++result.iterations;
    const Eigen::MatrixXd jac = problem.jacobian(u);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    const double diag_floor = std::max(jtj.diagonal().maxCoeff(), 1e-300) * 1e-12;

    for (;;) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index j = 0; j < damped.rows(); ++j)
        damped(j, j) += lambda * std::max(jtj(j, j), diag_floor);
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);

      Eigen::VectorXd trial = u + step;
      Eigen::VectorXd r_trial;
      const bool ok = try_residuals(trial, r_trial);
      const double trial_loss = ok ? r_trial.squaredNorm() : std::numeric_limits<double>::infinity();

      if (trial_loss < loss) {
        const double rel = (loss - trial_loss) / loss;
        u = std::move(trial);
        r = std::move(r_trial);
        loss = trial_loss;
        result.loss_history.push_back(loss);
        lambda = std::max(lambda / options.lambda_factor, 1e-300);
        if (rel < options.rel_loss_tol) {
          result.converged = true;
          result.stop_reason = "relative loss change below tolerance";
          done = true;
        }
        break;
      }

      if (step.allFinite() && step.norm() <= 1e-14 * (u.norm() + 1e-14)) {
        result.converged = true;
        result.stop_reason = "step below numerical resolution";
        done = true;
        break;
      }
      lambda *= options.lambda_factor;
      if (lambda > options.max_lambda) {
        result.stop_reason = "damping exceeded limit without descent";
        done = true;
        break;
      }
    }
  }
  if (!done && !result.converged) result.stop_reason = "iteration limit reached";

  // Covariance at the final point.
  const Eigen::MatrixXd jac = problem.jacobian(u);
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jtj);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double ev_max = ev.maxCoeff();
  const double ev_min = ev.minCoeff();
  result.condition_number = ev_min > 0.0 ? ev_max / ev_min : std::numeric_limits<double>::infinity();
  const double cutoff = options.singular_rcond * ev_max;
  result.near_singular = !(ev_min > cutoff);
  Eigen::VectorXd inv_ev(ev.size());
  for (Eigen::Index j = 0; j < ev.size(); ++j) inv_ev[j] = ev[j] > cutoff ? 1.0 / ev[j] : 0.0;
  const double dof = static_cast<double>(n - p);
  const Eigen::MatrixXd cov_internal =
      eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose() * (loss / dof);

  result.params = detail::from_internal(u);
  // d(physical)/d(internal), reordered to [beta2, rho, etas].
  const Eigen::Index np = problem.cols();
  Eigen::MatrixXd transform = Eigen::MatrixXd::Zero(np, np);
  transform(0, 1) = detail::beta2_unit;
  transform(1, 0) = result.params.rho_ps2_inv;
  for (Eigen::Index j = 2; j < np; ++j) {
    const double s = detail::logistic(u[j]);
    transform(j, j) = 0.5 * s * (1.0 - s);
  }
  result.covariance = transform * cov_internal * transform.transpose();
  result.beta2_uncertainty = std::sqrt(std::max(0.0, result.covariance(0, 0)));
  result.rho_uncertainty = std::sqrt(std::max(0.0, result.covariance(1, 1)));
  result.eta_uncertainties.resize(datasets.size());
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(2 + i);
    result.eta_uncertainties[i] = std::sqrt(std::max(0.0, result.covariance(j, j)));
  }

  // Diagnostics on plain (unweighted) residuals.
  const auto final_eval = global_loss(result.params, datasets, Weighting::Unweighted);
  result.scales = final_eval.scales;
  result.loss = loss;
  result.rmsre.reserve(datasets.size());
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    try {
      result.rmsre.push_back(rmsre(final_eval.residuals[i], datasets[i].curve.values()));
    } catch (const DomainError&) {
      result.rmsre.push_back({std::numeric_limits<double>::quiet_NaN(), 0, datasets[i].curve.size()});
    }
  }
  return result;
}

/// Default starting point: beta2 = 20 ps^2/km, the given rho, and every
/// eta just above 1/2.
inline FitParams default_init(double rho_ps2_inv, std::size_t dataset_count) {
  return {20.0, rho_ps2_inv, std::vector<double>(dataset_count, 0.5 + 1e-3)};
}

}  // namespace disphom
