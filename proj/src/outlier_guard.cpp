#include "bocpd/outlier_guard.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

double log_total(std::span<const RunHypothesis> hyps) {
  std::vector<double> joints;
  joints.reserve(hyps.size());
  for (const auto& h : hyps) joints.push_back(h.log_joint);
  return log_sum_exp(joints);
}

void check_aligned(std::span<const RunHypothesis> a, std::span<const RunHypothesis> b) {
  if (a.size() != b.size()) throw DimensionMismatch("shadow filter out of step with live filter");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].run_length != b[i].run_length) {
      throw DimensionMismatch("shadow filter run lengths differ from live filter");
    }
  }
}

}  // namespace

void OutlierConfig::validate(std::size_t d) const {
  if (outlier_window < 1) throw InvalidConfig("outlier_window must be positive");
  if (!(p0 > 0.0 && p0 < 1.0)) throw InvalidConfig("p0 must lie in (0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("alpha must lie in (0, 1)");
  if (mu0.size() != d || Omega0.dim() != d) {
    throw InvalidConfig("outlier mu0/Omega0 must have dimension " + std::to_string(d));
  }
  try {
    cholesky_logdet(Omega0);
  } catch (const NotPositiveDefinite&) {
    throw InvalidConfig("Omega0 is not positive definite");
  }
}

double outlier_log_density(std::span<const double> y, const OutlierConfig& config) {
  const std::size_t d = config.mu0.size();
  if (y.size() != d || config.Omega0.dim() != d) throw DimensionMismatch("outlier density: size");
  const Cholesky chol = cholesky_logdet(config.Omega0);
  Matrix z(d, 1);
  for (std::size_t i = 0; i < d; ++i) z(i, 0) = y[i] - config.mu0[i];
  // Forward solve only: the quadratic form is |L⁻¹(y − μ)|².
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double s = z(i, 0);
    for (std::size_t p = 0; p < i; ++p) s -= chol.factor(i, p) * z(p, 0);
    z(i, 0) = s / chol.factor(i, i);
    quad += z(i, 0) * z(i, 0);
  }
  return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * chol.logdet -
         0.5 * quad;
}

const ShadowEntry* ShadowBank::find(long time) const {
  for (const auto& e : entries)
    if (e.time == time) return &e;
  return nullptr;
}

void ShadowBank::erase(long time) {
  std::erase_if(entries, [time](const ShadowEntry& e) { return e.time == time; });
}

void ShadowBank::evict(long t) {
  const long oldest = t - static_cast<long>(capacity);
  std::erase_if(entries, [oldest](const ShadowEntry& e) { return e.time <= oldest; });
}

double OutlierPosterior::total() const {
  double s = none;
  for (const auto& c : candidates) s += c.second;
  return s;
}

std::optional<std::pair<long, double>> OutlierPosterior::best() const {
  std::optional<std::pair<long, double>> out;
  for (const auto& c : candidates) {
    if (!out || c.second > out->second || (c.second == out->second && c.first < out->first)) {
      out = c;
    }
  }
  return out;
}

void shadow_step(ShadowBank& bank, const Detector& live, const OutlierConfig& config,
                 std::span<const double> x, std::span<const double> y) {
  const ConjugateModel& model = live.model();
  model.check_dims(x, y);
  const double hazard = live.config().hazard;
  const double log_prior_pred = model.log_prior_predictive(x, y);
  for (auto& entry : bank.entries) {
    advance_hypotheses(entry.hypotheses, model, hazard, x, y, log_prior_pred);
  }

  // o = t: every run carries the current joint forward, scoring y under the outlier
  // density and leaving the statistics untouched.
  const double log_outlier = outlier_log_density(y, config);
  const double log_grow = std::log1p(-hazard);
  ShadowEntry fresh;
  fresh.time = live.time() + 1;
  fresh.x.assign(x.begin(), x.end());
  fresh.y.assign(y.begin(), y.end());
  fresh.hypotheses.reserve(live.hypotheses().size() + 1);
  RunHypothesis r0;
  r0.log_joint = log_total(live.hypotheses()) + std::log(hazard) + log_outlier;
  r0.stats = SufficientStats::zeros(model.d(), model.k());
  fresh.hypotheses.push_back(std::move(r0));
  for (const auto& h : live.hypotheses()) {
    RunHypothesis g = h;
    g.log_joint += log_grow + log_outlier;
    ++g.run_length;
    fresh.hypotheses.push_back(std::move(g));
  }
  bank.entries.push_back(std::move(fresh));
  bank.evict(live.time() + 1);
}

OutlierPosterior outlier_posterior(const ShadowBank& bank, const Detector& live,
                                   const OutlierConfig& config) {
  if (bank.empty()) throw EmptyBank("outlier posterior needs at least one candidate");
  const double per_candidate =
      (1.0 - config.p0) / static_cast<double>(std::max<std::size_t>(config.outlier_window - 1, 1));
  std::vector<double> logw;
  logw.reserve(bank.size() + 1);
  logw.push_back(std::log(config.p0) + log_total(live.hypotheses()));
  for (const auto& e : bank.entries) {
    logw.push_back(std::log(per_candidate) + log_total(e.hypotheses));
  }
  const double z = log_sum_exp(logw);
  if (!std::isfinite(z)) throw NumericalUnderflow("outlier posterior has no mass");
  OutlierPosterior post;
  post.none = std::exp(logw[0] - z);
  post.candidates.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    post.candidates.emplace_back(bank.entries[i].time, std::exp(logw[i + 1] - z));
  }
  return post;
}

std::optional<OutlierEvent> confirm_and_remove(Detector& live, ShadowBank& bank,
                                               const OutlierPosterior& post,
                                               const OutlierConfig& config) {
  const auto best = post.best();
  if (!best || best->second < config.alpha) return std::nullopt;
  auto it = std::find_if(bank.entries.begin(), bank.entries.end(),
                         [&](const ShadowEntry& e) { return e.time == best->first; });
  if (it == bank.entries.end()) throw EmptyBank("confirmed candidate is not in the bank");
  live.replace_hypotheses(std::move(it->hypotheses));
  bank.entries.erase(it);
  return OutlierEvent{best->first, best->second, live.time()};
}

GuardedDetector::GuardedDetector(Detector live, OutlierConfig config)
    : live_(std::move(live)), config_(std::move(config)) {
  config_.validate(live_.model().d());
  bank_.capacity = config_.outlier_window;
}

std::vector<bool> GuardedDetector::truncation_mask() const {
  std::vector<bool> keep = live_.truncation_mask();
  const double floor = live_.config().trunc_threshold;
  for (const auto& e : bank_.entries) {
    check_aligned(live_.hypotheses(), e.hypotheses);
    const double z = log_total(e.hypotheses);
    if (!std::isfinite(z)) continue;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (!keep[i] && std::exp(e.hypotheses[i].log_joint - z) >= floor) keep[i] = true;
    }
  }
  return keep;
}

GuardedStepResult GuardedDetector::step(std::span<const double> x, std::span<const double> y) {
  shadow_step(bank_, live_, config_, x, y);
  const double z = live_.advance(x, y);
  for (auto& e : bank_.entries) shift_log_joints(e.hypotheses, z);

  GuardedStepResult out;
  auto candidate = live_.suspected_change();
  if (trigger_policy(candidate)) {
    out.outlier_posterior = outlier_posterior(bank_, live_, config_);
    out.outlier = confirm_and_remove(live_, bank_, *out.outlier_posterior, config_);
    if (out.outlier) candidate = live_.suspected_change();
  }
  out.change = live_.publish(std::move(candidate));

  const std::vector<bool> keep = truncation_mask();
  const double shift = live_.apply_mask(keep);
  if (std::find(keep.begin(), keep.end(), false) != keep.end()) {
    for (auto& e : bank_.entries) {
      filter_by_mask(e.hypotheses, keep);
      shift_log_joints(e.hypotheses, shift);
    }
  }
  out.posterior = live_.run_length_posterior();
  return out;
}

void GuardedDetector::restore(GuardedState state) {
  for (const auto& e : state.bank.entries) check_aligned(state.live.hypotheses, e.hypotheses);
  live_.restore(std::move(state.live));
  bank_ = std::move(state.bank);
  bank_.capacity = config_.outlier_window;
}

}  // namespace bocpd
