#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bocpd/conjugate_model.hpp"

namespace bocpd {

struct DetectorConfig {
  double hazard = 1.0 / 270.0;      ///< per-step prior probability of a changepoint
  double trunc_threshold = 1e-4;    ///< posterior floor below which run lengths are dropped
  std::size_t cp_window_len = 5;    ///< L: a window covers run lengths l0..l0+L
  std::size_t cp_search_max = 6;    ///< l_max: largest window start searched
  double declare_threshold = 0.5;   ///< window mass needed to declare a change

  /// Throws InvalidConfig on out-of-range values.
  void validate() const;
};

/// One run-length hypothesis: log f(Y_1:t, r_t = run_length) and the run's statistics.
struct RunHypothesis {
  long run_length = 0;
  double log_joint = 0.0;
  SufficientStats stats;
  double log_marginal = 0.0;  ///< cached log marginal of the rows in stats
};

struct RunLengthMass {
  long run_length = 0;
  double probability = 0.0;
};

/// Posterior over run lengths, ascending by run length.
struct RunLengthPosterior {
  std::vector<RunLengthMass> masses;

  double at(long run_length) const;
  double total() const;
  /// Run length with the largest mass; ties go to the smaller run length.
  long mode() const;
};

struct ChangeEvent {
  long declared_at = 0;     ///< observation index at which the change was declared
  long changepoint_at = 0;  ///< declared_at minus the most probable run length in the window
  double window_mass = 0.0;
  RunLengthPosterior posterior;
};

/// Windowed declaration rule. For l0 in 0..cp_search_max the mass of run lengths
/// l0..l0+L is summed; if the best window reaches declare_threshold, the event sits
/// at that window's most probable run length.
std::optional<ChangeEvent> extract_changepoint(const RunLengthPosterior& post,
                                               const DetectorConfig& config, long t);

/// Normalized posterior from a hypothesis set.
RunLengthPosterior posterior_of(std::span<const RunHypothesis> hyps);

/// One step of the run-length recursion on a hypothesis set (ascending run length).
/// Grows each hypothesis with its own predictive and prepends a fresh r = 0 hypothesis
/// whose joint is Σ joints + log λ + log_new_run_density. Log joints are left unnormalized.
void advance_hypotheses(std::vector<RunHypothesis>& hyps, const ConjugateModel& model,
                        double hazard, std::span<const double> x, std::span<const double> y,
                        double log_new_run_density);

/// Full serializable detector state.
struct DetectorState {
  std::vector<RunHypothesis> hypotheses;
  long t = 0;
  double log_evidence = 0.0;
  std::optional<long> last_published;
};

struct StepResult {
  RunLengthPosterior posterior;
  std::optional<ChangeEvent> change;
};

/// Streaming run-length filter for one series. Not thread-safe; one detector per stream.
class Detector {
 public:
  Detector(Hyperparameters eta, DetectorConfig config);
  Detector(std::shared_ptr<const ConjugateModel> model, DetectorConfig config);

  StepResult step(std::span<const double> x, std::span<const double> y);

  RunLengthPosterior run_length_posterior() const { return posterior_of(hyps_); }
  long time() const noexcept { return t_; }
  double log_evidence() const noexcept { return log_evidence_; }
  const std::vector<RunHypothesis>& hypotheses() const noexcept { return hyps_; }
  const DetectorConfig& config() const noexcept { return config_; }
  const ConjugateModel& model() const noexcept { return *model_; }
  std::shared_ptr<const ConjugateModel> shared_model() const noexcept { return model_; }

  DetectorState state() const;
  void restore(DetectorState state);

  // Step phases, exposed so the outlier guard can interleave its own work.

  /// Runs the recursion and normalizes; returns the log normalizer that was subtracted.
  double advance(std::span<const double> x, std::span<const double> y);
  std::optional<ChangeEvent> suspected_change() const;
  /// Drops candidates that repeat the last published location within ±L.
  std::optional<ChangeEvent> publish(std::optional<ChangeEvent> candidate);
  /// Keep-mask: posterior >= trunc_threshold, plus r = 0 and the most probable hypothesis.
  std::vector<bool> truncation_mask() const;
  /// Drops masked-out hypotheses and renormalizes; returns the log shift applied.
  double apply_mask(const std::vector<bool>& keep);
  /// Replaces the hypothesis set (outlier removal). Renormalization happens on the next step.
  void replace_hypotheses(std::vector<RunHypothesis> hyps);

 private:
  std::shared_ptr<const ConjugateModel> model_;
  DetectorConfig config_;
  std::vector<RunHypothesis> hyps_;
  long t_ = 0;
  double log_evidence_ = 0.0;
  std::optional<long> last_published_;
};

/// Keeps entries whose mask bit is set.
void filter_by_mask(std::vector<RunHypothesis>& hyps, const std::vector<bool>& keep);

/// Subtracts c from every log joint.
void shift_log_joints(std::vector<RunHypothesis>& hyps, double c);

}  // namespace bocpd
