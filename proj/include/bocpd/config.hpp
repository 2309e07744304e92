#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bocpd/outlier_guard.hpp"

namespace bocpd {

/// Covariates built from a timestamp: [1], sin(2πt/period), cos(2πt/period), t/trend_scale,
/// with t in days (or index units) since `origin`.
struct CovariateRecipe {
  bool intercept = true;
  bool harmonics = true;
  bool trend = true;
  double period = 365.0;
  double trend_scale = 365.0;
  std::optional<double> origin;  ///< unset: the first observation of each stream

  std::size_t size() const;
};

std::vector<double> covariates(double t, const CovariateRecipe& recipe);

enum class TimeFormat { date, index };

/// Which CSV columns feed the detector.
struct StreamMapping {
  std::string time_column = "date";
  TimeFormat time_format = TimeFormat::date;
  std::vector<std::string> value_columns{"ndvi", "swir2"};
  std::string qa_column;                  ///< empty: no QA filtering
  std::vector<std::string> qa_ok{"0"};    ///< QA values that mark a usable row
  std::vector<std::string> covariate_columns;  ///< when set, replaces the harmonic recipe
  std::string series_column;              ///< empty: one stream per file
};

struct RunConfig {
  std::optional<Hyperparameters> eta;
  double lambda0_scale = 1.0;
  double v0_scale = 1.0;
  DetectorConfig detector;
  OutlierConfig outlier;
  bool guard = true;
  CovariateRecipe covariates;
  StreamMapping stream;

  /// Hyperparameters with the scale knobs applied. Throws InvalidConfig when absent.
  Hyperparameters effective_prior() const;
  /// Cross-checks dimensions between prior, covariates, mapping and outlier model.
  void validate() const;
};

/// Applies one `section.key = value` setting. Unknown keys throw InvalidConfig.
/// `base_dir` resolves relative paths (prior.file).
void apply_setting(RunConfig& config, const std::string& section, const std::string& key,
                   const std::string& value, const std::filesystem::path& base_dir = {});

/// Parses `section.key=value`.
void apply_override(RunConfig& config, const std::string& assignment);

/// Reads a config file on top of `config`. Sections: prior, detector, outlier,
/// covariates, stream. Values starting with '[' are JSON arrays.
void load_config_file(RunConfig& config, const std::filesystem::path& path);

/// Same format, from text.
void load_config_text(RunConfig& config, const std::string& text,
                      const std::filesystem::path& base_dir = {});

/// Writes a [prior] section that load_config_file reads back exactly.
std::string format_prior(const Hyperparameters& eta);

/// Full config as text, round-trippable through load_config_text.
std::string format_config(const RunConfig& config);

}  // namespace bocpd
