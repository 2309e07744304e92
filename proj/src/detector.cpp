#include "bocpd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double joint_normalizer(std::span<const RunHypothesis> hyps) {
  std::vector<double> joints;
  joints.reserve(hyps.size());
  for (const auto& h : hyps) joints.push_back(h.log_joint);
  return log_sum_exp(joints);
}

}  // namespace

void DetectorConfig::validate() const {
  if (!(hazard > 0.0 && hazard < 1.0)) throw InvalidConfig("hazard must lie in (0, 1)");
  if (!(trunc_threshold >= 0.0 && trunc_threshold < 1.0)) {
    throw InvalidConfig("trunc_threshold must lie in [0, 1)");
  }
  if (cp_window_len < 1) throw InvalidConfig("cp_window_len must be positive");
  if (!(declare_threshold > 0.0 && declare_threshold <= 1.0)) {
    throw InvalidConfig("declare_threshold must lie in (0, 1]");
  }
}

double RunLengthPosterior::at(long run_length) const {
  auto it = std::lower_bound(masses.begin(), masses.end(), run_length,
                             [](const RunLengthMass& m, long r) { return m.run_length < r; });
  return (it != masses.end() && it->run_length == run_length) ? it->probability : 0.0;
}

double RunLengthPosterior::total() const {
  double s = 0.0;
  for (const auto& m : masses) s += m.probability;
  return s;
}

long RunLengthPosterior::mode() const {
  long best = 0;
  double best_p = -1.0;
  for (const auto& m : masses) {
    if (m.probability > best_p) {
      best_p = m.probability;
      best = m.run_length;
    }
  }
  return best;
}

RunLengthPosterior posterior_of(std::span<const RunHypothesis> hyps) {
  RunLengthPosterior post;
  post.masses.reserve(hyps.size());
  const double z = joint_normalizer(hyps);
  for (const auto& h : hyps) {
    const double p = (z == kNegInf) ? 0.0 : std::exp(h.log_joint - z);
    post.masses.push_back({h.run_length, p});
  }
  return post;
}

std::optional<ChangeEvent> extract_changepoint(const RunLengthPosterior& post,
                                               const DetectorConfig& config, long t) {
  const auto window = static_cast<long>(config.cp_window_len);
  const auto search = static_cast<long>(config.cp_search_max);
  double best_mass = -1.0;
  long best_start = 0;
  for (long l0 = 0; l0 <= search; ++l0) {
    double mass = 0.0;
    for (const auto& m : post.masses) {
      if (m.run_length > l0 + window) break;
      if (m.run_length >= l0) mass += m.probability;
    }
    if (mass > best_mass) {
      best_mass = mass;
      best_start = l0;
    }
  }
  if (best_mass < config.declare_threshold) return std::nullopt;

  long r_star = best_start;
  double r_star_p = -1.0;
  for (const auto& m : post.masses) {
    if (m.run_length > best_start + window) break;
    if (m.run_length >= best_start && m.probability > r_star_p) {
      r_star_p = m.probability;
      r_star = m.run_length;
    }
  }
  ChangeEvent ev;
  ev.declared_at = t;
  ev.changepoint_at = t - r_star;
  ev.window_mass = best_mass;
  ev.posterior = post;
  return ev;
}

void advance_hypotheses(std::vector<RunHypothesis>& hyps, const ConjugateModel& model,
                        double hazard, std::span<const double> x, std::span<const double> y,
                        double log_new_run_density) {
  const double log_grow = std::log1p(-hazard);
  const double log_change = std::log(hazard);
  const double total = joint_normalizer(hyps);

  for (auto& h : hyps) {
    const double lm = model.log_marginal_with(h.stats, x, y);
    h.log_joint += (lm - h.log_marginal) + log_grow;
    h.log_marginal = lm;
    h.stats.add(x, y);
    ++h.run_length;
  }
  RunHypothesis fresh;
  fresh.run_length = 0;
  fresh.log_joint = total + log_change + log_new_run_density;
  fresh.stats = SufficientStats::zeros(model.d(), model.k());
  fresh.log_marginal = 0.0;
  hyps.insert(hyps.begin(), std::move(fresh));
}

void filter_by_mask(std::vector<RunHypothesis>& hyps, const std::vector<bool>& keep) {
  if (keep.size() != hyps.size()) throw DimensionMismatch("truncation mask size");
  std::size_t out = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (!keep[i]) continue;
    if (out != i) hyps[out] = std::move(hyps[i]);
    ++out;
  }
  hyps.resize(out);
}

void shift_log_joints(std::vector<RunHypothesis>& hyps, double c) {
  for (auto& h : hyps) h.log_joint -= c;
}

Detector::Detector(Hyperparameters eta, DetectorConfig config)
    : Detector(std::make_shared<const ConjugateModel>(std::move(eta)), config) {}

Detector::Detector(std::shared_ptr<const ConjugateModel> model, DetectorConfig config)
    : model_(std::move(model)), config_(config) {
  if (!model_) throw InvalidConfig("detector requires a model");
  config_.validate();
  RunHypothesis h;
  h.stats = SufficientStats::zeros(model_->d(), model_->k());
  hyps_.push_back(std::move(h));
  // The stream start is a known boundary; the initial run is never reported as a change.
  last_published_ = 0;
}

double Detector::advance(std::span<const double> x, std::span<const double> y) {
  model_->check_dims(x, y);
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("observation contains a non-finite value");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError("covariate contains a non-finite value");
  }
  advance_hypotheses(hyps_, *model_, config_.hazard, x, y, model_->log_prior_predictive(x, y));
  const double z = joint_normalizer(hyps_);
  if (!std::isfinite(z)) {
    throw NumericalUnderflow("every run-length hypothesis has zero probability at t=" +
                             std::to_string(t_ + 1));
  }
  shift_log_joints(hyps_, z);
  log_evidence_ += z;
  ++t_;
  return z;
}

std::optional<ChangeEvent> Detector::suspected_change() const {
  return extract_changepoint(run_length_posterior(), config_, t_);
}

std::optional<ChangeEvent> Detector::publish(std::optional<ChangeEvent> candidate) {
  if (!candidate) return std::nullopt;
  const auto window = static_cast<long>(config_.cp_window_len);
  if (last_published_ && std::abs(candidate->changepoint_at - *last_published_) <= window) {
    return std::nullopt;
  }
  last_published_ = candidate->changepoint_at;
  return candidate;
}

std::vector<bool> Detector::truncation_mask() const {
  std::vector<bool> keep(hyps_.size(), false);
  const double z = joint_normalizer(hyps_);
  std::size_t best = 0;
  for (std::size_t i = 0; i < hyps_.size(); ++i) {
    if (hyps_[i].log_joint > hyps_[best].log_joint) best = i;
    const double p = std::exp(hyps_[i].log_joint - z);
    if (p >= config_.trunc_threshold || hyps_[i].run_length == 0) keep[i] = true;
  }
  if (!keep.empty()) keep[best] = true;
  return keep;
}

double Detector::apply_mask(const std::vector<bool>& keep) {
  if (std::all_of(keep.begin(), keep.end(), [](bool b) { return b; })) {
    if (keep.size() != hyps_.size()) throw DimensionMismatch("truncation mask size");
    return 0.0;
  }
  filter_by_mask(hyps_, keep);
  const double z = joint_normalizer(hyps_);
  shift_log_joints(hyps_, z);
  return z;
}

void Detector::replace_hypotheses(std::vector<RunHypothesis> hyps) {
  if (hyps.empty()) throw EmptyBank("replacement hypothesis set is empty");
  hyps_ = std::move(hyps);
}

StepResult Detector::step(std::span<const double> x, std::span<const double> y) {
  advance(x, y);
  auto change = publish(suspected_change());
  apply_mask(truncation_mask());
  return {run_length_posterior(), std::move(change)};
}

DetectorState Detector::state() const { return {hyps_, t_, log_evidence_, last_published_}; }

void Detector::restore(DetectorState state) {
  if (state.hypotheses.empty()) throw SchemaError("detector state has no hypotheses");
  long prev = -1;
  int zeros = 0;
  for (const auto& h : state.hypotheses) {
    if (h.stats.d() != model_->d() || h.stats.k() != model_->k()) {
      throw DimensionMismatch("detector state: stats dimensions do not match the model");
    }
    if (h.run_length <= prev) throw SchemaError("detector state: run lengths not ascending");
    // Confirmed outliers leave runs with fewer rows than their length.
    if (h.stats.n > h.run_length || h.stats.n < 0) {
      throw SchemaError("detector state: stats count exceeds run length");
    }
    if (h.run_length > state.t) throw SchemaError("detector state: run length exceeds time");
    if (h.run_length == 0) ++zeros;
    prev = h.run_length;
  }
  if (state.t > 0 && zeros != 1) throw SchemaError("detector state: missing r = 0 hypothesis");
  hyps_ = std::move(state.hypotheses);
  t_ = state.t;
  log_evidence_ = state.log_evidence;
  last_published_ = state.last_published;
}

}  // namespace bocpd
