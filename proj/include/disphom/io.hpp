#pragma once

// Dataset files and JSON configs.
//
// A dataset is `<name>.csv` (header `tau_ps,counts`, lines starting with
// `#` ignored) plus `<name>.meta.json` holding window_half_width_ns,
// fiber_length_km and label. Numbers are written in shortest round-trip
// form, so write -> read is lossless and output bytes depend only on the
// values.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "disphom/constants.hpp"
#include "disphom/errors.hpp"
#include "disphom/fitting.hpp"
#include "disphom/synthetic.hpp"
#include "disphom/types.hpp"

namespace disphom::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class ParseErrorKind {
  Unreadable,
  MissingColumns,
  BadNumber,
  NonMonotoneTau,
  NegativeCounts,
  MissingSidecar,
  BadMetadata,
  BadConfig,
};

inline const char* to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::Unreadable: return "unreadable file";
    case ParseErrorKind::MissingColumns: return "missing columns";
    case ParseErrorKind::BadNumber: return "malformed number";
    case ParseErrorKind::NonMonotoneTau: return "non-monotone tau";
    case ParseErrorKind::NegativeCounts: return "negative counts";
    case ParseErrorKind::MissingSidecar: return "missing sidecar";
    case ParseErrorKind::BadMetadata: return "bad metadata";
    case ParseErrorKind::BadConfig: return "bad config";
  }
  return "parse error";
}

/// Carries what went wrong and where: a 1-based line for CSV problems, a
/// key for JSON ones.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& path, std::size_t line, std::string key,
             const std::string& detail)
      : Error(compose(kind, path, line, key, detail)), kind_(kind), line_(line), key_(std::move(key)) {}

  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }  // 0 when not line-based
  const std::string& key() const noexcept { return key_; }

 private:
  static std::string compose(ParseErrorKind kind, const std::string& path, std::size_t line,
                             const std::string& key, const std::string& detail) {
    std::string msg = path;
    if (line > 0) msg += ":" + std::to_string(line);
    msg += ": ";
    msg += to_string(kind);
    if (!key.empty()) msg += " (key '" + key + "')";
    if (!detail.empty()) msg += ": " + detail;
    return msg;
  }

  ParseErrorKind kind_;
  std::size_t line_;
  std::string key_;
};

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// FNV-1a 64-bit hash of a file's bytes, as 16 hex digits.
inline std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::Unreadable, path.string(), 0, "", "cannot open");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorKind::Unreadable, path.string(), 0, "", "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << text;
  if (!out.flush()) throw Error(path.string() + ": write failed");
}

inline HomCurve parse_curve_csv(std::string_view text, const std::string& path = "<csv>") {
  std::vector<double> tau;
  std::vector<double> counts;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;

    const auto comma = line.find(',');
    if (!have_header) {
      if (line.substr(first) != "tau_ps,counts")
        throw ParseError(ParseErrorKind::MissingColumns, path, line_no, "",
                         "expected header 'tau_ps,counts', got '" + std::string(line) + "'");
      have_header = true;
      continue;
    }
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos)
      throw ParseError(ParseErrorKind::MissingColumns, path, line_no, "", "expected two columns");
    const auto t = parse_number(line.substr(0, comma));
    if (!t) throw ParseError(ParseErrorKind::BadNumber, path, line_no, "tau_ps", "");
    const auto c = parse_number(line.substr(comma + 1));
    if (!c) throw ParseError(ParseErrorKind::BadNumber, path, line_no, "counts", "");
    if (!tau.empty() && !(*t > tau.back()))
      throw ParseError(ParseErrorKind::NonMonotoneTau, path, line_no, "tau_ps",
                       "tau_ps must strictly increase");
    if (*c < 0.0) throw ParseError(ParseErrorKind::NegativeCounts, path, line_no, "counts", "");
    tau.push_back(*t);
    counts.push_back(*c);
  }
  if (!have_header) throw ParseError(ParseErrorKind::MissingColumns, path, 0, "", "no 'tau_ps,counts' header");
  return HomCurve(std::move(tau), std::move(counts));
}

inline std::string format_curve_csv(const HomCurve& curve, std::span<const std::string> comments = {}) {
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  out += "tau_ps,counts\n";
  const auto tau = curve.tau_ps();
  const auto y = curve.values();
  for (std::size_t i = 0; i < curve.size(); ++i) out += format_number(tau[i]) + "," + format_number(y[i]) + "\n";
  return out;
}

inline HomCurve read_curve_csv(const fs::path& path) { return parse_curve_csv(read_text(path), path.string()); }

inline void write_curve_csv(const fs::path& path, const HomCurve& curve, std::span<const std::string> comments = {}) {
  write_text(path, format_curve_csv(curve, comments));
}

inline fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

/// Rejects keys outside `allowed`; unit-suffixed names are the only ones
/// accepted, so a bare "window" or "length" is reported rather than ignored.
inline void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& path) {
  if (!obj.is_object()) throw ParseError(ParseErrorKind::BadConfig, path, 0, "", "expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ParseError(ParseErrorKind::BadConfig, path, 0, key, "unknown key (keys carry a unit suffix)");
  }
}

inline double number_at(const Json& obj, const std::string& key, const std::string& path,
                        ParseErrorKind kind = ParseErrorKind::BadConfig) {
  if (!obj.contains(key)) throw ParseError(kind, path, 0, key, "missing");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(kind, path, 0, key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(kind, path, 0, key, "not finite");
  return d;
}

inline double number_or(const Json& obj, const std::string& key, double fallback, const std::string& path) {
  return obj.contains(key) ? number_at(obj, key, path) : fallback;
}

inline std::vector<double> numbers_at(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw ParseError(ParseErrorKind::BadConfig, path, 0, key, "missing");
  const auto& v = obj.at(key);
  if (!v.is_array()) throw ParseError(ParseErrorKind::BadConfig, path, 0, key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ParseError(ParseErrorKind::BadConfig, path, 0, key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline Json parse_json(std::string_view text, const std::string& path,
                       ParseErrorKind kind = ParseErrorKind::BadConfig) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(kind, path, 0, "", e.what());
  }
}

inline Json read_json(const fs::path& path) { return parse_json(read_text(path), path.string()); }

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

/// Reads `<name>.csv` and its `<name>.meta.json` sidecar.
inline Dataset read_dataset(const fs::path& csv) {
  HomCurve curve = read_curve_csv(csv);
  const fs::path meta_path = sidecar_path(csv);
  if (!fs::exists(meta_path))
    throw ParseError(ParseErrorKind::MissingSidecar, meta_path.string(), 0, "", "no metadata next to " + csv.string());
  const std::string mp = meta_path.string();
  const Json meta = parse_json(read_text(meta_path), mp, ParseErrorKind::BadMetadata);
  if (!meta.is_object()) throw ParseError(ParseErrorKind::BadMetadata, mp, 0, "", "expected a JSON object");
  for (const auto& [key, _] : meta.items()) {
    if (key != "window_half_width_ns" && key != "fiber_length_km" && key != "label")
      throw ParseError(ParseErrorKind::BadMetadata, mp, 0, key, "unknown key");
  }
  Dataset d;
  d.curve = std::move(curve);
  d.window_half_width_ps = number_at(meta, "window_half_width_ns", mp, ParseErrorKind::BadMetadata) * constants::ps_per_ns;
  d.fiber_length_km = number_at(meta, "fiber_length_km", mp, ParseErrorKind::BadMetadata);
  if (!(d.window_half_width_ps > 0.0))
    throw ParseError(ParseErrorKind::BadMetadata, mp, 0, "window_half_width_ns", "must be > 0");
  if (d.fiber_length_km < 0.0) throw ParseError(ParseErrorKind::BadMetadata, mp, 0, "fiber_length_km", "must be >= 0");
  if (!meta.contains("label") || !meta.at("label").is_string())
    throw ParseError(ParseErrorKind::BadMetadata, mp, 0, "label", "expected a string");
  d.label = meta.at("label").get<std::string>();
  return d;
}

inline Json dataset_metadata(const Dataset& d) {
  Json meta;
  meta["window_half_width_ns"] = d.window_half_width_ps / constants::ps_per_ns;
  meta["fiber_length_km"] = d.fiber_length_km;
  meta["label"] = d.label;
  return meta;
}

inline void write_dataset(const Dataset& d, const fs::path& csv) {
  write_curve_csv(csv, d.curve);
  write_text(sidecar_path(csv), dump_json(dataset_metadata(d)));
}

/// Every `*.csv` in `dir`, sorted by file name.
inline std::vector<fs::path> dataset_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError(ParseErrorKind::Unreadable, dir.string(), 0, "", "not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline SourceParams parse_source(const Json& j, const std::string& path) {
  check_keys(j, {"delta_ng_signal_unitless", "delta_ng_idler_unitless", "crystal_length_mm", "pump_wavelength_nm",
                 "pump_sigma_radps", "poling_period_um"},
             path);
  SourceParams s;
  s.delta_ng_signal = number_at(j, "delta_ng_signal_unitless", path);
  s.delta_ng_idler = number_at(j, "delta_ng_idler_unitless", path);
  s.crystal_length_mm = number_or(j, "crystal_length_mm", s.crystal_length_mm, path);
  s.pump_wavelength_nm = number_or(j, "pump_wavelength_nm", s.pump_wavelength_nm, path);
  s.pump_sigma_radps = number_or(j, "pump_sigma_radps", s.pump_sigma_radps, path);
  s.poling_period_um = number_or(j, "poling_period_um", s.poling_period_um, path);
  s.validate();
  return s;
}

inline FilterParams parse_filter(const Json& j, const std::string& path) {
  check_keys(j, {"center_wavelength_nm", "fwhm_nm", "convention"}, path);
  FilterParams f;
  f.center_wavelength_nm = number_or(j, "center_wavelength_nm", f.center_wavelength_nm, path);
  f.fwhm_nm = number_or(j, "fwhm_nm", f.fwhm_nm, path);
  if (j.contains("convention")) {
    const auto& c = j.at("convention");
    if (c == "field") f.convention = FilterConvention::FieldLevel;
    else if (c == "intensity") f.convention = FilterConvention::IntensityLevel;
    else throw ParseError(ParseErrorKind::BadConfig, path, 0, "convention", "expected \"field\" or \"intensity\"");
  }
  f.validate();
  return f;
}

/// Campaign JSON. Windows are given in ns, the optional tau grid in ps;
/// `eta_unitless` sets one reflectivity for all datasets, `etas_unitless`
/// one per dataset.
inline CampaignConfig parse_campaign(const Json& j, const std::string& path) {
  check_keys(j, {"source", "filter", "rho_ps2_inv", "beta2_ps2_per_km", "fiber_lengths_km", "windows_ns",
                 "eta_unitless", "etas_unitless", "tau_grid", "peak_counts", "seed"},
             path);
  CampaignConfig c;
  if (j.contains("source")) c.source = parse_source(j.at("source"), path);
  if (j.contains("filter")) c.filter = parse_filter(j.at("filter"), path);
  if (j.contains("rho_ps2_inv")) c.rho_ps2_inv = number_at(j, "rho_ps2_inv", path);
  if (!c.source && !c.rho_ps2_inv)
    throw ParseError(ParseErrorKind::BadConfig, path, 0, "rho_ps2_inv", "give rho_ps2_inv or a source block");
  c.beta2_ps2_per_km = number_or(j, "beta2_ps2_per_km", c.beta2_ps2_per_km, path);
  c.fiber_lengths_km = numbers_at(j, "fiber_lengths_km", path);
  c.windows_ps = numbers_at(j, "windows_ns", path);
  for (double& w : c.windows_ps) w *= constants::ps_per_ns;
  if (j.contains("eta_unitless") && j.contains("etas_unitless"))
    throw ParseError(ParseErrorKind::BadConfig, path, 0, "etas_unitless", "give eta_unitless or etas_unitless, not both");
  if (j.contains("eta_unitless")) c.etas = {number_at(j, "eta_unitless", path)};
  if (j.contains("etas_unitless")) c.etas = numbers_at(j, "etas_unitless", path);
  if (j.contains("tau_grid")) {
    const auto& g = j.at("tau_grid");
    check_keys(g, {"min_ps", "max_ps", "points"}, path);
    TauGrid grid;
    grid.min_ps = number_at(g, "min_ps", path);
    grid.max_ps = number_at(g, "max_ps", path);
    if (!g.contains("points") || !g.at("points").is_number_unsigned())
      throw ParseError(ParseErrorKind::BadConfig, path, 0, "points", "expected a positive integer");
    grid.points = g.at("points").get<std::size_t>();
    c.tau_grid = grid;
  }
  c.peak_counts = number_or(j, "peak_counts", c.peak_counts, path);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned())
      throw ParseError(ParseErrorKind::BadConfig, path, 0, "seed", "expected a nonnegative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ParseError(ParseErrorKind::BadConfig, path, 0, "", e.what());
  }
  return c;
}

struct FitInit {
  FitParams params;
  FitOptions options;
};

/// Fit start point. rho comes from `rho_ps2_inv` or from a source/filter
/// pair; eta from `eta_unitless` (all datasets) or `etas_unitless`.
inline FitInit parse_fit_init(const Json& j, std::size_t dataset_count, const std::string& path) {
  check_keys(j, {"beta2_ps2_per_km", "rho_ps2_inv", "eta_unitless", "etas_unitless", "source", "filter", "weighting",
                 "max_iterations_count"},
             path);
  double rho = 0.0;
  if (j.contains("rho_ps2_inv")) {
    rho = number_at(j, "rho_ps2_inv", path);
  } else if (j.contains("source")) {
    const FilterParams f = j.contains("filter") ? parse_filter(j.at("filter"), path) : FilterParams{};
    rho = derive_spectral(parse_source(j.at("source"), path), f).rho;
  } else {
    throw ParseError(ParseErrorKind::BadConfig, path, 0, "rho_ps2_inv", "give rho_ps2_inv or a source block");
  }
  if (!(rho > 0.0)) throw ParseError(ParseErrorKind::BadConfig, path, 0, "rho_ps2_inv", "must be > 0");
  FitInit out;
  out.params = default_init(rho, dataset_count);
  out.params.beta2_ps2_per_km = number_or(j, "beta2_ps2_per_km", out.params.beta2_ps2_per_km, path);
  if (j.contains("eta_unitless")) out.params.etas.assign(dataset_count, number_at(j, "eta_unitless", path));
  if (j.contains("etas_unitless")) {
    out.params.etas = numbers_at(j, "etas_unitless", path);
    if (out.params.etas.size() != dataset_count)
      throw ParseError(ParseErrorKind::BadConfig, path, 0, "etas_unitless",
                       "expected " + std::to_string(dataset_count) + " values, one per dataset");
  }
  for (const double e : out.params.etas)
    if (!(e >= 0.0 && e <= 1.0)) throw ParseError(ParseErrorKind::BadConfig, path, 0, "eta_unitless", "outside [0, 1]");
  if (j.contains("weighting")) {
    const auto& w = j.at("weighting");
    if (w == "unweighted") out.options.weighting = Weighting::Unweighted;
    else if (w == "poisson") out.options.weighting = Weighting::Poisson;
    else throw ParseError(ParseErrorKind::BadConfig, path, 0, "weighting", "expected \"unweighted\" or \"poisson\"");
  }
  if (j.contains("max_iterations_count")) {
    if (!j.at("max_iterations_count").is_number_unsigned())
      throw ParseError(ParseErrorKind::BadConfig, path, 0, "max_iterations_count", "expected a positive integer");
    out.options.max_iterations = j.at("max_iterations_count").get<int>();
  }
  return out;
}

}  // namespace disphom::io
