#include "bocpd/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "bocpd/error.hpp"
#include "bocpd/simgen.hpp"

namespace bocpd {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

std::string where(const std::string& section, const std::string& key) {
  return section + "." + key;
}

double parse_number(const std::string& v, const std::string& name) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw InvalidConfig(name + ": expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(out)) {
    throw InvalidConfig(name + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

std::size_t parse_count(const std::string& v, const std::string& name) {
  const double x = parse_number(v, name);
  if (x < 0 || x != std::floor(x)) throw InvalidConfig(name + ": expected a nonnegative integer");
  return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& v, const std::string& name) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw InvalidConfig(name + ": expected true or false, got '" + v + "'");
}

json parse_json(const std::string& v, const std::string& name) {
  try {
    return json::parse(v);
  } catch (const json::exception& e) {
    throw InvalidConfig(name + ": malformed array: " + e.what());
  }
}

Matrix parse_matrix(const std::string& v, const std::string& name) {
  const json j = parse_json(v, name);
  if (!j.is_array() || j.empty()) throw InvalidConfig(name + ": expected [[...], ...]");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    if (!r.is_array()) throw InvalidConfig(name + ": expected an array of rows");
    std::vector<double> row;
    for (const auto& x : r) {
      if (!x.is_number()) throw InvalidConfig(name + ": non-numeric entry");
      row.push_back(x.get<double>());
    }
    rows.push_back(std::move(row));
  }
  try {
    return Matrix::from_rows(rows);
  } catch (const DimensionMismatch&) {
    throw InvalidConfig(name + ": ragged rows");
  }
}

std::vector<double> parse_vector(const std::string& v, const std::string& name) {
  const json j = parse_json(v, name);
  if (!j.is_array()) throw InvalidConfig(name + ": expected [...]");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) throw InvalidConfig(name + ": non-numeric entry");
    out.push_back(x.get<double>());
  }
  return out;
}

// Accepts ["a", "b"], [a, b] or a, b.
std::vector<std::string> parse_strings(const std::string& v, const std::string& name) {
  if (v.empty()) return {};
  std::string body = v;
  if (body.front() == '[') {
    if (body.back() != ']') throw InvalidConfig(name + ": unterminated [...]");
    body = body.substr(1, body.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream in(body);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = unquote(trim(item));
    if (item.empty()) throw InvalidConfig(name + ": empty list entry");
    out.push_back(item);
  }
  return out;
}

SymMatrix parse_sym(const std::string& v, const std::string& name) {
  const Matrix m = parse_matrix(v, name);
  if (m.rows() != m.cols()) throw InvalidConfig(name + ": must be square");
  return SymMatrix(m);
}

Hyperparameters& prior_slot(RunConfig& c) {
  if (!c.eta) c.eta = Hyperparameters{};
  return *c.eta;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string matrix_text(const Matrix& m) {
  std::string out = "[";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += i ? ", [" : "[";
    for (std::size_t j = 0; j < m.cols(); ++j) out += (j ? ", " : "") + num(m(i, j));
    out += "]";
  }
  return out + "]";
}

std::string vector_text(std::span<const double> v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + num(v[i]);
  return out + "]";
}

std::string strings_text(const std::vector<std::string>& v) { return json(v).dump(); }

}  // namespace

std::size_t CovariateRecipe::size() const {
  return (intercept ? 1 : 0) + (harmonics ? 2 : 0) + (trend ? 1 : 0);
}

std::vector<double> covariates(double t, const CovariateRecipe& recipe) {
  std::vector<double> x;
  x.reserve(recipe.size());
  if (recipe.intercept) x.push_back(1.0);
  if (recipe.harmonics) {
    const double phase = 2.0 * std::numbers::pi * t / recipe.period;
    x.push_back(std::sin(phase));
    x.push_back(std::cos(phase));
  }
  if (recipe.trend) x.push_back(t / recipe.trend_scale);
  return x;
}

Hyperparameters RunConfig::effective_prior() const {
  if (!eta) throw InvalidConfig("no prior configured (set [prior] or prior.file)");
  Hyperparameters out = *eta;
  out.Lambda0 *= lambda0_scale;
  out.V0 *= v0_scale;
  try {
    out.validate();
  } catch (const InvalidConfig& e) {
    throw InvalidConfig(std::string("prior: ") + e.what());
  }
  return out;
}

void RunConfig::validate() const {
  const Hyperparameters prior = effective_prior();
  detector.validate();
  if (guard) outlier.validate(prior.d());
  if (stream.value_columns.size() != prior.d()) {
    throw InvalidConfig("stream.value_columns has " + std::to_string(stream.value_columns.size()) +
                        " columns but the prior has d = " + std::to_string(prior.d()));
  }
  const std::size_t k = stream.covariate_columns.empty()
                            ? covariates.size()
                            : stream.covariate_columns.size() + (covariates.intercept ? 1 : 0);
  if (k != prior.k()) {
    throw InvalidConfig("covariates produce k = " + std::to_string(k) +
                        " but the prior has k = " + std::to_string(prior.k()));
  }
  if (!(covariates.period > 0.0) || !(covariates.trend_scale > 0.0)) {
    throw InvalidConfig("covariates.period and covariates.trend_scale must be positive");
  }
}

void apply_setting(RunConfig& c, const std::string& section, const std::string& key,
                   const std::string& raw, const std::filesystem::path& base_dir) {
  const std::string v = trim(raw);
  const std::string name = where(section, key);
  if (section == "prior") {
    if (key == "B0") prior_slot(c).B0 = parse_matrix(v, name);
    else if (key == "Lambda0") prior_slot(c).Lambda0 = parse_sym(v, name);
    else if (key == "V0") prior_slot(c).V0 = parse_sym(v, name);
    else if (key == "nu0") prior_slot(c).nu0 = parse_number(v, name);
    else if (key == "lambda0_scale") c.lambda0_scale = parse_number(v, name);
    else if (key == "v0_scale") c.v0_scale = parse_number(v, name);
    else if (key == "preset") {
      const std::string p = unquote(v);
      if (p == "simulation") c.eta = simulation_prior(false);
      else if (p == "simulation-seasonal") c.eta = simulation_prior(true);
      else throw InvalidConfig(name + ": unknown preset '" + p + "'");
    } else if (key == "file") {
      std::filesystem::path p = unquote(v);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      RunConfig sub;
      load_config_file(sub, p);
      if (!sub.eta) throw InvalidConfig(name + ": " + p.string() + " has no [prior] section");
      c.eta = sub.eta;
    } else {
      throw InvalidConfig("unknown key " + name);
    }
  } else if (section == "detector") {
    if (key == "hazard") c.detector.hazard = parse_number(v, name);
    else if (key == "expected_run_length") {
      const double n = parse_number(v, name);
      if (!(n > 1.0)) throw InvalidConfig(name + ": must exceed 1");
      c.detector.hazard = 1.0 / n;
    } else if (key == "trunc_threshold") c.detector.trunc_threshold = parse_number(v, name);
    else if (key == "cp_window_len") c.detector.cp_window_len = parse_count(v, name);
    else if (key == "cp_search_max") c.detector.cp_search_max = parse_count(v, name);
    else if (key == "declare_threshold") c.detector.declare_threshold = parse_number(v, name);
    else throw InvalidConfig("unknown key " + name);
  } else if (section == "outlier") {
    if (key == "enabled") c.guard = parse_bool(v, name);
    else if (key == "window") c.outlier.outlier_window = parse_count(v, name);
    else if (key == "p0") c.outlier.p0 = parse_number(v, name);
    else if (key == "alpha") c.outlier.alpha = parse_number(v, name);
    else if (key == "mu0") c.outlier.mu0 = parse_vector(v, name);
    else if (key == "Omega0") c.outlier.Omega0 = parse_sym(v, name);
    else throw InvalidConfig("unknown key " + name);
  } else if (section == "covariates") {
    if (key == "intercept") c.covariates.intercept = parse_bool(v, name);
    else if (key == "harmonics") c.covariates.harmonics = parse_bool(v, name);
    else if (key == "trend") c.covariates.trend = parse_bool(v, name);
    else if (key == "period") c.covariates.period = parse_number(v, name);
    else if (key == "trend_scale") c.covariates.trend_scale = parse_number(v, name);
    else if (key == "origin") {
      const std::string o = unquote(v);
      if (o == "first") c.covariates.origin.reset();
      else c.covariates.origin = parse_number(o, name);
    } else {
      throw InvalidConfig("unknown key " + name);
    }
  } else if (section == "stream") {
    if (key == "time_column") c.stream.time_column = unquote(v);
    else if (key == "time_format") {
      const std::string f = unquote(v);
      if (f == "date") c.stream.time_format = TimeFormat::date;
      else if (f == "index") c.stream.time_format = TimeFormat::index;
      else throw InvalidConfig(name + ": expected date or index");
    } else if (key == "value_columns") c.stream.value_columns = parse_strings(v, name);
    else if (key == "qa_column") c.stream.qa_column = unquote(v);
    else if (key == "qa_ok") c.stream.qa_ok = parse_strings(v, name);
    else if (key == "covariate_columns") c.stream.covariate_columns = parse_strings(v, name);
    else if (key == "series_column") c.stream.series_column = unquote(v);
    else throw InvalidConfig("unknown key " + name);
  } else {
    throw InvalidConfig("unknown section [" + section + "]");
  }
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw InvalidConfig("override must look like section.key=value, got '" + assignment + "'");
  }
  apply_setting(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
                assignment.substr(eq + 1));
}

void load_config_text(RunConfig& config, const std::string& text,
                      const std::filesystem::path& base_dir) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key = value", lineno);
    if (section.empty()) throw ParseError("config: setting outside a [section]", lineno);
    try {
      apply_setting(config, section, trim(line.substr(0, eq)), line.substr(eq + 1), base_dir);
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
}

void load_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  load_config_text(config, buf.str(), path.parent_path());
}

std::string format_prior(const Hyperparameters& eta) {
  std::string out = "[prior]\n";
  out += "B0 = " + matrix_text(eta.B0) + "\n";
  out += "Lambda0 = " + matrix_text(eta.Lambda0) + "\n";
  out += "V0 = " + matrix_text(eta.V0) + "\n";
  out += "nu0 = " + num(eta.nu0) + "\n";
  return out;
}

std::string format_config(const RunConfig& c) {
  std::string out;
  if (c.eta) out += format_prior(*c.eta);
  else out += "[prior]\n";
  out += "lambda0_scale = " + num(c.lambda0_scale) + "\n";
  out += "v0_scale = " + num(c.v0_scale) + "\n";
  out += "\n[detector]\n";
  out += "hazard = " + num(c.detector.hazard) + "\n";
  out += "trunc_threshold = " + num(c.detector.trunc_threshold) + "\n";
  out += "cp_window_len = " + std::to_string(c.detector.cp_window_len) + "\n";
  out += "cp_search_max = " + std::to_string(c.detector.cp_search_max) + "\n";
  out += "declare_threshold = " + num(c.detector.declare_threshold) + "\n";
  out += "\n[outlier]\n";
  out += std::string("enabled = ") + (c.guard ? "true" : "false") + "\n";
  out += "window = " + std::to_string(c.outlier.outlier_window) + "\n";
  out += "p0 = " + num(c.outlier.p0) + "\n";
  out += "alpha = " + num(c.outlier.alpha) + "\n";
  out += "mu0 = " + vector_text(c.outlier.mu0) + "\n";
  out += "Omega0 = " + matrix_text(c.outlier.Omega0) + "\n";
  out += "\n[covariates]\n";
  out += std::string("intercept = ") + (c.covariates.intercept ? "true" : "false") + "\n";
  out += std::string("harmonics = ") + (c.covariates.harmonics ? "true" : "false") + "\n";
  out += std::string("trend = ") + (c.covariates.trend ? "true" : "false") + "\n";
  out += "period = " + num(c.covariates.period) + "\n";
  out += "trend_scale = " + num(c.covariates.trend_scale) + "\n";
  out += "origin = " + (c.covariates.origin ? num(*c.covariates.origin) : std::string("first")) + "\n";
  out += "\n[stream]\n";
  out += "time_column = " + c.stream.time_column + "\n";
  out += std::string("time_format = ") +
         (c.stream.time_format == TimeFormat::date ? "date" : "index") + "\n";
  out += "value_columns = " + strings_text(c.stream.value_columns) + "\n";
  out += "qa_column = " + c.stream.qa_column + "\n";
  out += "qa_ok = " + strings_text(c.stream.qa_ok) + "\n";
  out += "covariate_columns = " + strings_text(c.stream.covariate_columns) + "\n";
  out += "series_column = " + c.stream.series_column + "\n";
  return out;
}

}  // namespace bocpd
