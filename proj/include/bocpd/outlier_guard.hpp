#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "bocpd/detector.hpp"

namespace bocpd {

struct OutlierConfig {
  std::size_t outlier_window = 20;  ///< L_o: candidates kept in the bank
  double p0 = 0.5;                  ///< prior probability of no outlier in the window
  double alpha = 0.9;               ///< posterior needed to confirm a candidate
  std::vector<double> mu0{0.5, 0.5};
  SymMatrix Omega0 = 2.0 * SymMatrix::identity(2);

  /// Throws InvalidConfig; d is the observation dimension.
  void validate(std::size_t d) const;
};

/// log N(y; mu0, Omega0).
double outlier_log_density(std::span<const double> y, const OutlierConfig& config);

/// Filter conditioned on observation `time` being an outlier: its row is withheld
/// from every run's statistics and scored under the outlier density instead.
struct ShadowEntry {
  long time = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<RunHypothesis> hypotheses;
};

/// Shadow filters for the most recent candidate outliers, oldest first.
struct ShadowBank {
  std::size_t capacity = 0;
  std::vector<ShadowEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  const ShadowEntry* find(long time) const;
  void erase(long time);
  /// Drops entries with time <= t - capacity.
  void evict(long t);
};

struct OutlierPosterior {
  double none = 1.0;  ///< P(o = ∅)
  std::vector<std::pair<long, double>> candidates;  ///< (s, P(o = s)), bank order

  double total() const;
  /// Most probable candidate; ties go to the earlier time. Empty when there are none.
  std::optional<std::pair<long, double>> best() const;
};

struct OutlierEvent {
  long outlier_time = 0;
  double posterior_prob = 0.0;
  long detected_at = 0;
};

/// Advances every shadow filter with (x, y), then adds the entry for the newest point
/// built from `live` before it sees (x, y). Call once per step, before live.advance.
void shadow_step(ShadowBank& bank, const Detector& live, const OutlierConfig& config,
                 std::span<const double> x, std::span<const double> y);

/// Posterior over o ∈ {∅} ∪ bank, marginalized over run length.
OutlierPosterior outlier_posterior(const ShadowBank& bank, const Detector& live,
                                   const OutlierConfig& config);

/// Swaps in the best candidate's filter when its probability reaches alpha.
std::optional<OutlierEvent> confirm_and_remove(Detector& live, ShadowBank& bank,
                                               const OutlierPosterior& post,
                                               const OutlierConfig& config);

/// The outlier check runs only when the live filter suspects a change.
inline bool trigger_policy(const std::optional<ChangeEvent>& cp_candidate) {
  return cp_candidate.has_value();
}

struct GuardedStepResult {
  RunLengthPosterior posterior;
  std::optional<ChangeEvent> change;
  std::optional<OutlierEvent> outlier;
  std::optional<OutlierPosterior> outlier_posterior;  ///< set when the check ran
};

struct GuardedState {
  DetectorState live;
  ShadowBank bank;
};

/// Detector plus its shadow bank. Same one-stream, sequential contract as Detector.
class GuardedDetector {
 public:
  GuardedDetector(Detector live, OutlierConfig config);

  GuardedStepResult step(std::span<const double> x, std::span<const double> y);

  const Detector& live() const noexcept { return live_; }
  const ShadowBank& bank() const noexcept { return bank_; }
  const OutlierConfig& config() const noexcept { return config_; }
  long time() const noexcept { return live_.time(); }

  GuardedState state() const { return {live_.state(), bank_}; }
  void restore(GuardedState state);

 private:
  /// Keeps a run length if it survives in the live filter or in any shadow.
  std::vector<bool> truncation_mask() const;

  Detector live_;
  OutlierConfig config_;
  ShadowBank bank_;
};

}  // namespace bocpd
