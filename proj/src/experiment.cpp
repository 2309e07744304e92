#include "bocpd/experiment.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

#include "bocpd/error.hpp"

namespace bocpd {

Monitor::Monitor(std::shared_ptr<const ConjugateModel> model, DetectorConfig detector,
                 std::optional<OutlierConfig> guard)
    : impl_(Detector(model, detector)) {
  if (guard) impl_ = GuardedDetector(Detector(std::move(model), detector), std::move(*guard));
}

MonitorStep Monitor::step(std::span<const double> x, std::span<const double> y) {
  if (auto* g = std::get_if<GuardedDetector>(&impl_)) {
    auto r = g->step(x, y);
    return {std::move(r.posterior), std::move(r.change), r.outlier};
  }
  auto r = std::get<Detector>(impl_).step(x, y);
  return {std::move(r.posterior), std::move(r.change), std::nullopt};
}

const Detector& Monitor::live() const {
  if (const auto* g = std::get_if<GuardedDetector>(&impl_)) return g->live();
  return std::get<Detector>(impl_);
}

GuardedState Monitor::state() const {
  if (const auto* g = std::get_if<GuardedDetector>(&impl_)) return g->state();
  return {std::get<Detector>(impl_).state(), {}};
}

void Monitor::restore(GuardedState state) {
  if (auto* g = std::get_if<GuardedDetector>(&impl_)) {
    g->restore(std::move(state));
    return;
  }
  if (!state.bank.empty()) throw SchemaError("snapshot carries a shadow bank but the guard is off");
  std::get<Detector>(impl_).restore(std::move(state.live));
}

SeriesRun run_series(const std::shared_ptr<const ConjugateModel>& model,
                     const MonitorSettings& settings, const Matrix& X, const Matrix& Y,
                     const PosteriorSink& sink) {
  if (X.rows() != Y.rows()) throw DimensionMismatch("run_series: X and Y row counts differ");
  Monitor monitor(model, settings.detector, settings.guard);
  SeriesRun run;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto r = monitor.step(X.row(i), Y.row(i));
    if (r.outlier) run.outliers.push_back(*r.outlier);
    if (r.change) run.changes.push_back(std::move(*r.change));
    if (sink) sink(monitor.time(), r.posterior);
  }
  const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
  if (X.rows() > 0) run.step_ms = elapsed.count() / static_cast<double>(X.rows());
  return run;
}

Matrix simulation_design(const LabeledSeries& series) {
  Matrix X(series.X.rows(), series.X.cols() + 1);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < series.X.cols(); ++j) X(i, j + 1) = series.X(i, j);
  }
  return X;
}

ScenarioResult run_scenario(const ScenarioSpec& spec, const MonitorSettings& settings, int n_reps,
                            std::uint64_t base_seed, long tol, int threads) {
  if (n_reps < 1) throw InvalidSpec("n_reps must be at least 1");
  const auto model = std::make_shared<const ConjugateModel>(settings.eta);
  ScenarioResult result;
  result.runs.resize(static_cast<std::size_t>(n_reps));
  result.scores.resize(static_cast<std::size_t>(n_reps));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < n_reps; i = next++) {
      try {
        const LabeledSeries series = generate(spec, base_seed + static_cast<std::uint64_t>(i));
        SeriesRun run = run_series(model, settings, simulation_design(series), series.Y);
        std::vector<Declaration> declared;
        for (const auto& c : run.changes) declared.push_back({c.changepoint_at, c.declared_at});
        SeriesScore score = score_series(declared, series.true_changepoint, tol);
        score.step_ms = run.step_ms;
        result.runs[static_cast<std::size_t>(i)] = std::move(run);
        result.scores[static_cast<std::size_t>(i)] = score;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min(threads, n_reps));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  result.report = aggregate(result.scores);
  return result;
}

}  // namespace bocpd
