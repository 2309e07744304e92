#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "bocpd/evaluation.hpp"
#include "bocpd/outlier_guard.hpp"
#include "bocpd/simgen.hpp"

namespace bocpd {

struct MonitorStep {
  RunLengthPosterior posterior;
  std::optional<ChangeEvent> change;
  std::optional<OutlierEvent> outlier;
};

/// A detector with or without the outlier guard, behind one stepping interface.
class Monitor {
 public:
  Monitor(std::shared_ptr<const ConjugateModel> model, DetectorConfig detector,
          std::optional<OutlierConfig> guard);

  MonitorStep step(std::span<const double> x, std::span<const double> y);

  bool guarded() const noexcept { return std::holds_alternative<GuardedDetector>(impl_); }
  const Detector& live() const;
  long time() const { return live().time(); }

  GuardedState state() const;
  void restore(GuardedState state);

 private:
  std::variant<Detector, GuardedDetector> impl_;
};

struct MonitorSettings {
  Hyperparameters eta;
  DetectorConfig detector;
  std::optional<OutlierConfig> guard = OutlierConfig{};
};

struct SeriesRun {
  std::vector<ChangeEvent> changes;
  std::vector<OutlierEvent> outliers;
  double step_ms = 0.0;
};

using PosteriorSink = std::function<void(long t, const RunLengthPosterior&)>;

/// Steps a monitor over the rows of (X, Y).
SeriesRun run_series(const std::shared_ptr<const ConjugateModel>& model,
                     const MonitorSettings& settings, const Matrix& X, const Matrix& Y,
                     const PosteriorSink& sink = {});

/// Detector design for a simulated series: an intercept column followed by its covariates.
Matrix simulation_design(const LabeledSeries& series);

struct ScenarioResult {
  std::vector<SeriesRun> runs;
  std::vector<SeriesScore> scores;
  ScoreReport report;
};

/// Generates n_reps series of the scenario, runs each, scores against the truth.
/// Results are ordered by seed regardless of `threads`.
ScenarioResult run_scenario(const ScenarioSpec& spec, const MonitorSettings& settings, int n_reps,
                            std::uint64_t base_seed, long tol = 5, int threads = 1);

}  // namespace bocpd
