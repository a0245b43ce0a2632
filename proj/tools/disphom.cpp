// disphom: simulate, check, generate and fit dispersed HOM coincidence curves.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "disphom/disphom.hpp"
#include "disphom/io.hpp"

namespace fs = std::filesystem;
using namespace disphom;
using io::Json;

namespace {

constexpr int exit_error = 1;
constexpr int exit_not_converged = 2;

struct CurveFlags {
  double rho = 0.0;
  double beta2 = 0.0;
  double length_km = 0.0;
  double window_ns = 0.0;
  double eta = 0.5;
  double tau_min_ps = 0.0;
  double tau_max_ps = 0.0;
  std::size_t points = 201;
  std::string out;
};

void add_curve_flags(CLI::App* cmd, CurveFlags& f) {
  cmd->add_option("--rho", f.rho, "spectral width parameter rho (ps^-2)")->required();
  cmd->add_option("--beta2", f.beta2, "fiber dispersion beta2 (ps^2/km)")->required();
  cmd->add_option("--length-km", f.length_km, "fiber length (km)")->required();
  cmd->add_option("--window-ns", f.window_ns, "coincidence window half-width (ns)")->required();
  cmd->add_option("--eta", f.eta, "beam-splitter reflectivity")->required();
  cmd->add_option("--tau-min-ps", f.tau_min_ps, "first delay (ps)")->required();
  cmd->add_option("--tau-max-ps", f.tau_max_ps, "last delay (ps)")->required();
  cmd->add_option("--points", f.points, "number of delays")->required();
  cmd->add_option("--out", f.out, "output CSV")->required();
}

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Dataset curve_dataset(const CurveFlags& f, HomCurve curve, std::string label) {
  return {std::move(curve), f.window_ns * constants::ps_per_ns, f.length_km, std::move(label)};
}

std::vector<double> curve_grid(const CurveFlags& f) {
  TauGrid g{f.tau_min_ps, f.tau_max_ps, f.points};
  g.validate();
  return g.samples();
}

int run_simulate(const CurveFlags& f) {
  const RateParams rate = make_rate_params(f.rho, {f.length_km, f.beta2}, {f.window_ns * constants::ps_per_ns, f.eta});
  const auto tau = curve_grid(f);
  io::write_dataset(curve_dataset(f, coincidence_curve(tau, rate), "simulated"), f.out);
  return 0;
}

int run_oracle(const CurveFlags& f, double rel_tol) {
  QuadratureSpec spec;
  spec.abs_tol = 1e-17;
  spec.rel_tol = rel_tol;
  const auto tau = curve_grid(f);
  const auto cmp = oracle::compare_to_closed_form(tau, f.rho, {f.length_km, f.beta2},
                                                  {f.window_ns * constants::ps_per_ns, f.eta}, spec);
  const std::vector<std::string> comments{
      "max_scale_matched_deviation_unitless=" + io::format_number(cmp.max_deviation),
      "at_tau_ps=" + io::format_number(cmp.max_deviation_tau_ps),
      "scale_unitless=" + io::format_number(cmp.scale)};
  Dataset d = curve_dataset(f, HomCurve(cmp.tau_ps, cmp.numeric), "oracle");
  io::write_curve_csv(f.out, d.curve, comments);
  io::write_text(io::sidecar_path(f.out), io::dump_json(io::dataset_metadata(d)));

  Json j;
  j["max_scale_matched_deviation_unitless"] = cmp.max_deviation;
  j["max_deviation_tau_ps"] = cmp.max_deviation_tau_ps;
  j["scale_unitless"] = cmp.scale;
  j["plateau_rate_unitless"] = cmp.plateau;
  std::cout << io::dump_json(j);
  return 0;
}

Json derived_json(const DerivedSpectral& d) {
  Json j;
  j["gamma_signal_ps_per_mm"] = d.gamma_signal;
  j["gamma_idler_ps_per_mm"] = d.gamma_idler;
  j["gamma_tilde_signal_unitless"] = number_or_null(d.gamma_tilde_signal);
  j["gamma_tilde_idler_unitless"] = number_or_null(d.gamma_tilde_idler);
  j["sigma_pm_radps"] = number_or_null(d.sigma_pm);
  j["r_ps2_inv"] = d.r;
  j["r_p_ps2_inv"] = d.r_p;
  j["s_ps2_inv"] = d.s;
  j["rho_ps2_inv"] = d.rho;
  j["pure_epm"] = d.pure_epm;
  return j;
}

int run_derive_source(const std::string& config, const std::string& out) {
  const Json cfg = io::read_json(config);
  io::check_keys(cfg, {"source", "filter"}, config);
  if (!cfg.contains("source")) throw io::ParseError(io::ParseErrorKind::BadConfig, config, 0, "source", "missing");
  const SourceParams source = io::parse_source(cfg.at("source"), config);
  FilterParams filter = cfg.contains("filter") ? io::parse_filter(cfg.at("filter"), config) : FilterParams{};

  Json j;
  const auto g = derive_gammas(source);
  const auto epm = check_epm(g.signal, g.idler);
  j["epm_mismatch_unitless"] = epm.mismatch;
  j["epm_satisfied"] = epm.satisfied;
  filter.convention = FilterConvention::FieldLevel;
  j["field_level"] = derived_json(derive_spectral(source, filter));
  filter.convention = FilterConvention::IntensityLevel;
  j["intensity_level"] = derived_json(derive_spectral(source, filter));
  io::write_text(out, io::dump_json(j));
  return 0;
}

int run_gen(const std::string& config, const std::string& out_dir) {
  const CampaignConfig cfg = io::parse_campaign(io::read_json(config), config);
  const auto datasets = generate_synthetic(cfg);
  fs::create_directories(out_dir);

  Json truth;
  truth["rho_ps2_inv"] = cfg.rho();
  truth["beta2_ps2_per_km"] = cfg.beta2_ps2_per_km;
  truth["peak_counts"] = cfg.peak_counts;
  truth["seed"] = cfg.seed;
  Json list = Json::array();
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& d = datasets[i];
    io::write_dataset(d, fs::path(out_dir) / (d.label + ".csv"));
    Json e;
    e["label"] = d.label;
    e["fiber_length_km"] = d.fiber_length_km;
    e["window_half_width_ns"] = d.window_half_width_ps / constants::ps_per_ns;
    e["eta_unitless"] = cfg.eta_for(i);
    list.push_back(e);
  }
  truth["datasets"] = list;
  io::write_text(fs::path(out_dir) / "campaign_truth.json", io::dump_json(truth));
  return 0;
}

Json fwhm_json(const FwhmResult& r) {
  Json j;
  j["fwhm_ps"] = r.fwhm_ps;
  j["baseline_counts"] = r.baseline;
  j["minimum_counts"] = r.minimum;
  j["minimum_tau_ps"] = r.minimum_tau_ps;
  j["left_crossing_ps"] = r.left_crossing_ps;
  j["right_crossing_ps"] = r.right_crossing_ps;
  return j;
}

Json fwhm_or_null(const HomCurve& c) {
  try {
    return extract_fwhm(c).fwhm_ps;
  } catch (const Error&) {
    return nullptr;
  }
}

int run_fit(const std::string& data_dir, const std::string& init_path, const std::string& report) {
  const auto files = io::dataset_files(data_dir);
  if (files.empty()) throw Error(data_dir + ": no *.csv datasets found");
  std::vector<Dataset> datasets;
  datasets.reserve(files.size());
  for (const auto& f : files) datasets.push_back(io::read_dataset(f));
  const auto init = io::parse_fit_init(io::read_json(init_path), datasets.size(), init_path);

  const FitResult r = lm_fit(datasets, init.params, init.options);
  const auto final_eval = global_loss(r.params, datasets, Weighting::Unweighted);

  Json j;
  j["converged"] = r.converged;
  j["stop_reason"] = r.stop_reason;
  j["iterations_count"] = r.iterations;
  j["beta2_ps2_per_km"] = r.params.beta2_ps2_per_km;
  j["beta2_uncertainty_ps2_per_km"] = r.beta2_uncertainty;
  j["rho_ps2_inv"] = r.params.rho_ps2_inv;
  j["rho_uncertainty_ps2_inv"] = r.rho_uncertainty;
  j["loss_counts2"] = r.loss;
  j["points_count"] = r.points;
  j["free_parameters_count"] = r.free_parameters;
  j["condition_number_unitless"] = number_or_null(r.condition_number);
  j["near_singular"] = r.near_singular;
  j["weighting"] = init.options.weighting == Weighting::Poisson ? "poisson" : "unweighted";
  Json history = Json::array();
  for (const double l : r.loss_history) history.push_back(l);
  j["loss_history_counts2"] = history;
  Json order = Json::array({"beta2_ps2_per_km", "rho_ps2_inv"});
  for (const auto& d : datasets) order.push_back("eta_unitless:" + d.label);
  j["covariance_order"] = order;
  Json cov = Json::array();
  for (Eigen::Index a = 0; a < r.covariance.rows(); ++a) {
    Json row = Json::array();
    for (Eigen::Index b = 0; b < r.covariance.cols(); ++b) row.push_back(r.covariance(a, b));
    cov.push_back(row);
  }
  j["covariance_mixed_units"] = cov;

  Json per = Json::array();
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& d = datasets[i];
    const double s = final_eval.scales[i];
    std::vector<double> model(final_eval.model[i]);
    for (double& m : model) m *= s;
    const double rho_prime = broadened_rho(r.params.rho_ps2_inv, {d.fiber_length_km, r.params.beta2_ps2_per_km});
    Json e;
    e["label"] = d.label;
    e["file"] = files[i].filename().string();
    e["file_hash_fnv1a64"] = io::file_hash(files[i]);
    e["metadata_hash_fnv1a64"] = io::file_hash(io::sidecar_path(files[i]));
    e["fiber_length_km"] = d.fiber_length_km;
    e["window_half_width_ns"] = d.window_half_width_ps / constants::ps_per_ns;
    e["eta_unitless"] = r.params.etas[i];
    e["eta_uncertainty_unitless"] = r.eta_uncertainties[i];
    e["scale_counts"] = s;
    e["rmsre_unitless"] = number_or_null(r.rmsre[i].value);
    e["rmsre_excluded_count"] = r.rmsre[i].excluded;
    e["data_fwhm_ps"] = fwhm_or_null(d.curve);
    e["model_fwhm_ps"] = fwhm_or_null(HomCurve(std::vector<double>(d.curve.tau_ps().begin(), d.curve.tau_ps().end()),
                                               std::move(model)));
    e["rho_prime_ps2_inv"] = rho_prime;
    try {
      e["predicted_oscillation_period_ps"] =
          oscillation_period(r.params.rho_ps2_inv, rho_prime, d.window_half_width_ps);
    } catch (const DomainError&) {
      e["predicted_oscillation_period_ps"] = nullptr;
    }
    per.push_back(e);
  }
  j["datasets"] = per;
  io::write_text(report, io::dump_json(j));

  if (!r.converged) {
    std::cerr << "fit did not converge: " << r.stop_reason << "\n";
    return exit_not_converged;
  }
  return 0;
}

int run_fwhm(const std::string& in, const std::string& out) {
  const HomCurve curve = io::read_curve_csv(in);
  io::write_text(out, io::dump_json(fwhm_json(extract_fwhm(curve))));
  return 0;
}

int run_osc_period(double rho, double beta2, double length_km, double window_ns) {
  const double rho_prime = broadened_rho(rho, {length_km, beta2});
  Json j;
  j["rho_prime_ps2_inv"] = rho_prime;
  j["oscillation_period_ps"] = oscillation_period(rho, rho_prime, window_ns * constants::ps_per_ns);
  std::cout << io::dump_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dispersed Hong-Ou-Mandel coincidence model and global fit"};
  app.require_subcommand(1);

  CurveFlags sim;
  auto* simulate = app.add_subcommand("simulate", "closed-form coincidence curve to CSV");
  add_curve_flags(simulate, sim);

  CurveFlags orc;
  double rel_tol = 1e-8;
  auto* oracle_cmd = app.add_subcommand("oracle", "numerical-integration curve and deviation from the closed form");
  add_curve_flags(oracle_cmd, orc);
  oracle_cmd->add_option("--rel-tol", rel_tol, "quadrature relative tolerance")->check(CLI::PositiveNumber);

  std::string config, out;
  auto* derive = app.add_subcommand("derive-source", "spectral parameters from crystal and filter");
  derive->add_option("--config", config, "source/filter JSON")->required();
  derive->add_option("--out", out, "output JSON")->required();

  std::string gen_config, out_dir;
  auto* gen = app.add_subcommand("gen", "Poisson-noised synthetic campaign");
  gen->add_option("--config", gen_config, "campaign JSON")->required();
  gen->add_option("--out-dir", out_dir, "output directory")->required();

  std::string data_dir, init, report;
  auto* fit = app.add_subcommand("fit", "global fit over a directory of datasets");
  fit->add_option("--data-dir", data_dir, "directory of <name>.csv + <name>.meta.json")->required();
  fit->add_option("--init", init, "initial parameters JSON")->required();
  fit->add_option("--report", report, "output report JSON")->required();

  std::string fwhm_in, fwhm_out;
  auto* fwhm = app.add_subcommand("fwhm", "dip width of a curve");
  fwhm->add_option("--in", fwhm_in, "input CSV")->required();
  fwhm->add_option("--out", fwhm_out, "output JSON")->required();

  double p_rho = 0, p_beta2 = 0, p_length = 0, p_window = 0;
  auto* osc = app.add_subcommand("osc-period", "side-lobe oscillation period");
  osc->add_option("--rho", p_rho, "rho (ps^-2)")->required();
  osc->add_option("--beta2", p_beta2, "beta2 (ps^2/km)")->required();
  osc->add_option("--length-km", p_length, "fiber length (km)")->required();
  osc->add_option("--window-ns", p_window, "window half-width (ns)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*oracle_cmd) return run_oracle(orc, rel_tol);
    if (*derive) return run_derive_source(config, out);
    if (*gen) return run_gen(gen_config, out_dir);
    if (*fit) return run_fit(data_dir, init, report);
    if (*fwhm) return run_fwhm(fwhm_in, fwhm_out);
    if (*osc) return run_osc_period(p_rho, p_beta2, p_length, p_window);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_error;
  }
  return exit_error;
}
