#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bocpd {

struct Declaration {
  long changepoint_at = 0;
  long declared_at = 0;
};

struct SeriesScore {
  int tp = 0;  ///< 1 when any declaration lands within tol of the truth
  int fp = 0;  ///< declarations outside tol
  std::optional<double> latency;  ///< declared_at − changepoint_at of the first hit
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  double step_ms = 0.0;  ///< mean wall time per observation; 0 when not measured
};

/// Scores one series with a single true changepoint. `declared` sorted by declared_at.
SeriesScore score_series(std::span<const Declaration> declared, long truth, long tol = 5);

struct Metric {
  double mean = 0.0;
  double se = 0.0;  ///< sd/√n; 0 when n == 1
  long n = 0;
};

struct ScoreReport {
  long series = 0;
  Metric tp, fp, precision, recall, f_score, latency, step_ms;
};

/// Means and standard errors across series; latency only over series with a hit.
ScoreReport aggregate(std::span<const SeriesScore> scores);

/// Mean and standard error of a sample.
Metric summarize(std::span<const double> values);

struct ReportRow {
  std::string label;
  ScoreReport report;
};

std::string report_csv(std::span<const ReportRow> rows);
/// Aligned text table, mean(se) per cell.
std::string report_text(std::span<const ReportRow> rows);

}  // namespace bocpd
