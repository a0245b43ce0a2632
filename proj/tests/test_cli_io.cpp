#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "disphom/disphom.hpp"
#include "disphom/io.hpp"
#include "reference.hpp"

using namespace disphom;
namespace fs = std::filesystem;

#ifndef DISPHOM_CLI
#error "DISPHOM_CLI must name the command-line binary"
#endif

namespace {

struct Run {
  int status = -1;
  std::string output;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" DISPHOM_CLI "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("disphom_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) { return io::read_text(p); }

io::ParseError parse_error(const std::string& text) {
  try {
    io::parse_curve_csv(text, "t.csv");
  } catch (const io::ParseError& e) {
    return e;
  }
  throw std::runtime_error("expected a parse error");
}

bool has_unit_suffix(const std::string& key) {
  static const char* suffixes[] = {"_ps", "_ns", "_km", "_ps2_per_km", "_ps2_inv", "_unitless", "_count", "_counts",
                                   "_counts2", "_ps_per_mm", "_radps", "_mixed_units"};
  for (const char* s : suffixes) {
    const std::size_t n = std::strlen(s);
    if (key.size() > n && key.compare(key.size() - n, n, s) == 0) return true;
  }
  return false;
}

// Every numeric leaf must sit under a unit-suffixed key.
void expect_unit_keys(const io::Json& j, const std::string& parent = "") {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (v.is_number()) EXPECT_TRUE(has_unit_suffix(k)) << "bare numeric key '" << k << "'";
      if (v.is_array() && !v.empty() && v.front().is_number()) EXPECT_TRUE(has_unit_suffix(k)) << k;
      expect_unit_keys(v, k);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) expect_unit_keys(v, parent);
  }
}

const std::string kCurveFlags =
    "--rho 14.53 --beta2 21.39 --length-km 10 --window-ns 0.4 --eta 0.5 --tau-min-ps -600 --tau-max-ps 600 "
    "--points 201";

}  // namespace

// --- numbers and CSV --------------------------------------------------------

TEST(Numbers, ShortestRoundTrip) {
  ref::Rng rng(71);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-20.0, 20.0));
    const auto back = io::parse_number(io::format_number(v));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, v);
  }
  EXPECT_EQ(io::format_number(300.0), "300");
  EXPECT_FALSE(io::parse_number("1.5x").has_value());
  EXPECT_FALSE(io::parse_number("").has_value());
  EXPECT_FALSE(io::parse_number("nan").has_value());
}

TEST(Csv, RoundTripIsLossless) {
  ref::Rng rng(72);
  std::vector<double> tau, y;
  double t = -500.0;
  for (int i = 0; i < 300; ++i) {
    t += rng.uniform(1e-6, 5.0);
    tau.push_back(t);
    y.push_back(rng.uniform(0.0, 1e5) / 3.0);
  }
  const Dataset d{HomCurve(tau, y), 437.5, 12.25, "random, with a comma"};
  TempDir dir;
  io::write_dataset(d, dir / "x.csv");
  const Dataset back = io::read_dataset(dir / "x.csv");
  EXPECT_EQ(back.curve, d.curve);
  EXPECT_EQ(back.window_half_width_ps, d.window_half_width_ps);
  EXPECT_EQ(back.fiber_length_km, d.fiber_length_km);
  EXPECT_EQ(back.label, d.label);
}

TEST(Csv, CommentsAndBlankLinesIgnored) {
  const auto c = io::parse_curve_csv("# made by hand\n\ntau_ps,counts\n# mid comment\n-1,5\n0,0\n1,5\n");
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.values()[1], 0.0);
}

TEST(Csv, DecimalCountsAccepted) {
  const auto c = io::parse_curve_csv("tau_ps,counts\n-1.5,10.25\n0,0.125\n1.5,9.75\n");
  EXPECT_EQ(c.values()[0], 10.25);
  EXPECT_EQ(c.values()[1], 0.125);
}

TEST(Csv, OutOfOrderDelayNamesFirstOffendingLine) {
  const auto e = parse_error("# c\ntau_ps,counts\n0,1\n1,1\n0.5,1\n0.2,1\n");
  EXPECT_EQ(e.kind(), io::ParseErrorKind::NonMonotoneTau);
  EXPECT_EQ(e.line(), 5u);
  EXPECT_NE(std::string(e.what()).find("t.csv:5"), std::string::npos);
}

TEST(Csv, RepeatedDelayIsNonMonotone) {
  EXPECT_EQ(parse_error("tau_ps,counts\n0,1\n0,1\n").kind(), io::ParseErrorKind::NonMonotoneTau);
}

TEST(Csv, NegativeCountsRejected) {
  const auto e = parse_error("tau_ps,counts\n0,1\n1,-2\n");
  EXPECT_EQ(e.kind(), io::ParseErrorKind::NegativeCounts);
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.key(), "counts");
}

TEST(Csv, MissingColumnsRejected) {
  EXPECT_EQ(parse_error("tau_ps\n0\n").kind(), io::ParseErrorKind::MissingColumns);
  EXPECT_EQ(parse_error("tau_ps,counts\n0,1\n2\n").kind(), io::ParseErrorKind::MissingColumns);
  EXPECT_EQ(parse_error("tau_ps,counts\n0,1\n2,3,4\n").line(), 3u);
  EXPECT_EQ(parse_error("").kind(), io::ParseErrorKind::MissingColumns);
}

TEST(Csv, MalformedNumberNamesColumn) {
  const auto e = parse_error("tau_ps,counts\n0,1\nx,3\n");
  EXPECT_EQ(e.kind(), io::ParseErrorKind::BadNumber);
  EXPECT_EQ(e.key(), "tau_ps");
}

TEST(Sidecar, MissingSidecarReported) {
  TempDir dir;
  write(dir / "a.csv", "tau_ps,counts\n0,1\n");
  try {
    io::read_dataset(dir / "a.csv");
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.kind(), io::ParseErrorKind::MissingSidecar);
    EXPECT_NE(std::string(e.what()).find("a.meta.json"), std::string::npos);
  }
}

TEST(Sidecar, MissingOrUnknownKeyNamed) {
  TempDir dir;
  write(dir / "a.csv", "tau_ps,counts\n0,1\n");
  write(dir / "a.meta.json", R"({"window_half_width_ns": 0.4, "label": "x"})");
  try {
    io::read_dataset(dir / "a.csv");
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.kind(), io::ParseErrorKind::BadMetadata);
    EXPECT_EQ(e.key(), "fiber_length_km");
  }
  write(dir / "a.meta.json", R"({"window_half_width": 0.4, "fiber_length_km": 1, "label": "x"})");
  try {
    io::read_dataset(dir / "a.csv");
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.key(), "window_half_width");
  }
}

TEST(Sidecar, WindowConvertedFromNanoseconds) {
  TempDir dir;
  write(dir / "a.csv", "tau_ps,counts\n0,1\n");
  write(dir / "a.meta.json", R"({"window_half_width_ns": 0.3, "fiber_length_km": 1, "label": "x"})");
  EXPECT_EQ(io::read_dataset(dir / "a.csv").window_half_width_ps, 0.3 * 1000.0);
}

TEST(Hash, Fnv1aKnownValues) {
  TempDir dir;
  write(dir / "empty", "");
  write(dir / "a", "a");
  EXPECT_EQ(io::file_hash(dir / "empty"), "cbf29ce484222325");
  EXPECT_EQ(io::file_hash(dir / "a"), "af63dc4c8601ec8c");
}

// --- configs ----------------------------------------------------------------

TEST(Config, CampaignParsesUnitsAndGrid) {
  const auto j = io::parse_json(R"({
    "rho_ps2_inv": 14.53, "beta2_ps2_per_km": 21.39,
    "fiber_lengths_km": [1, 10], "windows_ns": [0.3, 1.0],
    "eta_unitless": 0.52,
    "tau_grid": {"min_ps": -50, "max_ps": 50, "points": 101},
    "peak_counts": 5000, "seed": 18446744073709551615
  })", "c.json");
  const auto c = io::parse_campaign(j, "c.json");
  EXPECT_EQ(c.windows_ps, (std::vector<double>{300.0, 1000.0}));
  EXPECT_EQ(c.dataset_count(), 4u);
  EXPECT_EQ(c.seed, 18446744073709551615ull);
  ASSERT_TRUE(c.tau_grid.has_value());
  EXPECT_EQ(c.tau_grid->points, 101u);
}

TEST(Config, UnsuffixedKeyRejected) {
  const auto j = io::parse_json(R"({"rho_ps2_inv": 14.53, "fiber_lengths_km": [1], "windows": [0.4]})", "c.json");
  try {
    io::parse_campaign(j, "c.json");
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.key(), "windows");
  }
}

TEST(Config, SourceBlockSuppliesRho) {
  const auto j = io::parse_json(R"({
    "source": {"delta_ng_signal_unitless": 0.0471, "delta_ng_idler_unitless": -0.0415, "crystal_length_mm": 2},
    "filter": {"center_wavelength_nm": 1550, "fwhm_nm": 12, "convention": "field"},
    "fiber_lengths_km": [1], "windows_ns": [0.4]
  })", "c.json");
  const auto c = io::parse_campaign(j, "c.json");
  EXPECT_NEAR(c.rho(), derive_spectral({0.0471, -0.0415, 2.0}, {}).rho, 1e-15);
}

TEST(Config, FitInitDefaultsAndValidation) {
  const auto init = io::parse_fit_init(io::parse_json(R"({"rho_ps2_inv": 12})", "i.json"), 3, "i.json");
  EXPECT_EQ(init.params.beta2_ps2_per_km, 20.0);
  EXPECT_EQ(init.params.etas, std::vector<double>(3, 0.5 + 1e-3));
  EXPECT_THROW(io::parse_fit_init(io::parse_json(R"({"etas_unitless": [0.5], "rho_ps2_inv": 1})", "i.json"), 3, "i.json"),
               io::ParseError);
  EXPECT_THROW(io::parse_fit_init(io::parse_json(R"({"beta2": 20, "rho_ps2_inv": 1})", "i.json"), 3, "i.json"),
               io::ParseError);
  EXPECT_THROW(io::parse_json("{not json", "i.json"), io::ParseError);
}

// --- command line -----------------------------------------------------------

TEST(Cli, SimulateBalancedDipIsZeroAtOrigin) {
  TempDir dir;
  const auto r = run("simulate " + kCurveFlags + " --out " + (dir / "s.csv").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto d = io::read_dataset(dir / "s.csv");
  EXPECT_EQ(d.curve.size(), 201u);
  EXPECT_EQ(d.curve.tau_ps()[100], 0.0);
  EXPECT_LE(std::abs(d.curve.values()[100]), 1e-12);
  EXPECT_EQ(d.window_half_width_ps, 400.0);
}

TEST(Cli, SimulateIsByteDeterministic) {
  TempDir dir;
  ASSERT_EQ(run("simulate " + kCurveFlags + " --out " + (dir / "a.csv").string()).status, 0);
  ASSERT_EQ(run("simulate " + kCurveFlags + " --out " + (dir / "b.csv").string()).status, 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(Cli, OracleAgreesWithSimulate) {
  TempDir dir;
  const auto r = run("oracle " + kCurveFlags + " --rel-tol 1e-8 --out " + (dir / "o.csv").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto j = io::parse_json(r.output, "stdout");
  expect_unit_keys(j);
  EXPECT_LE(j.at("max_scale_matched_deviation_unitless").get<double>(), 1e-6);
  ASSERT_EQ(run("simulate " + kCurveFlags + " --out " + (dir / "s.csv").string()).status, 0);
  const auto o = io::read_curve_csv(dir / "o.csv");
  const auto s = io::read_curve_csv(dir / "s.csv");
  const double plateau = *std::max_element(s.values().begin(), s.values().end());
  for (std::size_t i = 0; i < s.size(); ++i)
    EXPECT_LE(std::abs(o.values()[i] - s.values()[i]), 1e-6 * std::max(s.values()[i], 1e-9 * plateau));
}

TEST(Cli, DeriveSourceReportsBothConventions) {
  TempDir dir;
  write(dir / "src.json", R"({"source": {"delta_ng_signal_unitless": 0.0471, "delta_ng_idler_unitless": -0.0415,
                                        "crystal_length_mm": 10}, "filter": {"fwhm_nm": 12}})");
  const auto r = run("derive-source --config " + (dir / "src.json").string() + " --out " + (dir / "d.json").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto j = io::read_json(dir / "d.json");
  expect_unit_keys(j);
  EXPECT_DOUBLE_EQ(j.at("intensity_level").at("s_ps2_inv").get<double>(),
                   2.0 * j.at("field_level").at("s_ps2_inv").get<double>());
  EXPECT_NEAR(j.at("field_level").at("r_ps2_inv").get<double>(), 2.7478, 1e-4);
  EXPECT_NEAR(j.at("epm_mismatch_unitless").get<double>(), 0.119, 5e-4);
}

TEST(Cli, GenThenFitRecoversTruth) {
  TempDir dir;
  write(dir / "campaign.json", R"({
    "rho_ps2_inv": 14.53, "beta2_ps2_per_km": 21.39,
    "fiber_lengths_km": [2, 10, 20], "windows_ns": [0.3, 0.6, 1.0],
    "eta_unitless": 0.53, "peak_counts": 10000, "seed": 77
  })");
  write(dir / "init.json", R"({"rho_ps2_inv": 14.53})");
  const std::string cfg = (dir / "campaign.json").string();
  ASSERT_EQ(run("gen --config " + cfg + " --out-dir " + (dir / "a").string()).status, 0);
  ASSERT_EQ(run("gen --config " + cfg + " --out-dir " + (dir / "b").string()).status, 0);
  const auto files = io::dataset_files(dir / "a");
  ASSERT_EQ(files.size(), 9u);
  for (const auto& f : files) {
    EXPECT_EQ(slurp(f), slurp(dir / "b" / f.filename()));
    EXPECT_EQ(slurp(io::sidecar_path(f)), slurp(io::sidecar_path(dir / "b" / f.filename())));
  }

  const auto r = run("fit --data-dir " + (dir / "a").string() + " --init " + (dir / "init.json").string() +
                     " --report " + (dir / "report.json").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const auto j = io::read_json(dir / "report.json");
  expect_unit_keys(j);
  EXPECT_TRUE(j.at("converged").get<bool>());
  const double b2 = j.at("beta2_ps2_per_km").get<double>(), sb2 = j.at("beta2_uncertainty_ps2_per_km").get<double>();
  const double rho = j.at("rho_ps2_inv").get<double>(), srho = j.at("rho_uncertainty_ps2_inv").get<double>();
  EXPECT_LE(std::abs(b2 - 21.39), 3.0 * sb2);
  EXPECT_LE(std::abs(rho - 14.53), 3.0 * srho);
  ASSERT_EQ(j.at("datasets").size(), 9u);
  const auto& d0 = j.at("datasets").at(0);
  EXPECT_EQ(d0.at("file_hash_fnv1a64").get<std::string>(), io::file_hash(files[0]));
  EXPECT_TRUE(d0.at("predicted_oscillation_period_ps").is_number());
  EXPECT_TRUE(d0.at("model_fwhm_ps").is_number());
}

TEST(Cli, FitReportIndependentOfThreadCount) {
  TempDir dir;
  write(dir / "campaign.json", R"({"rho_ps2_inv": 14.53, "fiber_lengths_km": [5, 15], "windows_ns": [0.4, 0.8],
                                  "eta_unitless": 0.55, "seed": 3})");
  write(dir / "init.json", R"({"rho_ps2_inv": 14})");
  ASSERT_EQ(run("gen --config " + (dir / "campaign.json").string() + " --out-dir " + (dir / "d").string()).status, 0);
  const std::string fit = "fit --data-dir " + (dir / "d").string() + " --init " + (dir / "init.json").string();
  ASSERT_EQ(run(fit + " --report " + (dir / "r1.json").string(), "DISPHOM_THREADS=1").status, 0);
  ASSERT_EQ(run(fit + " --report " + (dir / "r3.json").string(), "DISPHOM_THREADS=3").status, 0);
  EXPECT_EQ(slurp(dir / "r1.json"), slurp(dir / "r3.json"));
}

TEST(Cli, FitExitStatusReflectsConvergence) {
  TempDir dir;
  write(dir / "campaign.json", R"({"rho_ps2_inv": 14.53, "fiber_lengths_km": [5, 15], "windows_ns": [0.4, 0.8],
                                  "eta_unitless": 0.55, "seed": 4})");
  write(dir / "init.json", R"({"rho_ps2_inv": 30, "max_iterations_count": 1})");
  ASSERT_EQ(run("gen --config " + (dir / "campaign.json").string() + " --out-dir " + (dir / "d").string()).status, 0);
  const auto r = run("fit --data-dir " + (dir / "d").string() + " --init " + (dir / "init.json").string() +
                     " --report " + (dir / "r.json").string());
  EXPECT_EQ(r.status, 2) << r.output;
  EXPECT_FALSE(io::read_json(dir / "r.json").at("converged").get<bool>());
}

TEST(Cli, FwhmAndPeriod) {
  TempDir dir;
  ASSERT_EQ(run("simulate --rho 14.53 --beta2 21.39 --length-km 0 --window-ns 0.4 --eta 0.5 --tau-min-ps -3 "
                "--tau-max-ps 3 --points 6001 --out " + (dir / "s.csv").string())
                .status,
            0);
  ASSERT_EQ(run("fwhm --in " + (dir / "s.csv").string() + " --out " + (dir / "f.json").string()).status, 0);
  const auto f = io::read_json(dir / "f.json");
  expect_unit_keys(f);
  EXPECT_NEAR(f.at("fwhm_ps").get<double>(), 2.0 * std::sqrt(2.0 * constants::ln2 / 14.53), 1e-5);

  const auto p = run("osc-period --rho 14.53 --beta2 21.39 --length-km 10 --window-ns 0.4");
  ASSERT_EQ(p.status, 0) << p.output;
  const auto j = io::parse_json(p.output, "stdout");
  expect_unit_keys(j);
  EXPECT_NEAR(j.at("oscillation_period_ps").get<double>(), 3.36, 0.005);
}

TEST(Cli, UserErrorsGiveMessageAndNonzeroExit) {
  TempDir dir;
  const auto unknown = run("simulate " + kCurveFlags + " --out x.csv --window-ps 400");
  EXPECT_NE(unknown.status, 0);
  EXPECT_NE(unknown.output.find("window-ps"), std::string::npos) << unknown.output;

  const auto missing = run("fwhm --in " + (dir / "nope.csv").string() + " --out " + (dir / "f.json").string());
  EXPECT_EQ(missing.status, 1);
  EXPECT_NE(missing.output.find("nope.csv"), std::string::npos);
  EXPECT_EQ(missing.output.find("terminate"), std::string::npos);

  write(dir / "bad.csv", "tau_ps,counts\n0,1\n2,1\n1,1\n");
  const auto bad = run("fwhm --in " + (dir / "bad.csv").string() + " --out " + (dir / "f.json").string());
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.output.find("bad.csv:4"), std::string::npos) << bad.output;

  const auto dispersionless = run("osc-period --rho 14.53 --beta2 21.39 --length-km 0 --window-ns 0.4");
  EXPECT_EQ(dispersionless.status, 1);
  EXPECT_NE(dispersionless.output.find("no oscillations without dispersion"), std::string::npos);

  EXPECT_NE(run("").status, 0);
  EXPECT_NE(run("frobnicate").status, 0);
}
