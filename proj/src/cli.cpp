#include "bocpd/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "bocpd/config.hpp"
#include "bocpd/error.hpp"
#include "bocpd/evaluation.hpp"
#include "bocpd/experiment.hpp"
#include "bocpd/ingest.hpp"
#include "bocpd/prior_estimation.hpp"
#include "bocpd/simgen.hpp"
#include "bocpd/snapshot.hpp"

namespace bocpd {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileNotFound("cannot write " + path);
  out << text;
  if (!out) throw FileNotFound("failed writing " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunConfig load_run_config(const std::vector<std::string>& files,
                          const std::vector<std::string>& sets) {
  RunConfig cfg;
  for (const auto& f : files) load_config_file(cfg, f);
  for (const auto& s : sets) apply_override(cfg, s);
  return cfg;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, threads));
  if (count == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < std::min(count, n); ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// ---- detect / replay -------------------------------------------------------

struct EventRow {
  std::string kind;
  std::string changepoint_time;
  std::string declared_time;
  double mass = 0.0;
};

struct PosteriorRow {
  long t = 0;
  std::string time;
  RunLengthPosterior posterior;
};

struct StreamJob {
  Stream stream;
  const StreamSnapshot* resume = nullptr;
};

struct StreamOutput {
  std::vector<EventRow> events;
  std::vector<PosteriorRow> posteriors;
  StreamSnapshot snapshot;
};

StreamOutput process_stream(const StreamJob& job, const RunConfig& cfg,
                            const std::shared_ptr<const ConjugateModel>& model,
                            bool keep_posteriors) {
  Monitor monitor(model, cfg.detector, cfg.guard ? std::optional(cfg.outlier) : std::nullopt);
  StreamOutput out;
  StreamSnapshot& snap = out.snapshot;
  snap.series = job.stream.id;

  // Events can point back at most this many observations.
  const std::size_t horizon =
      std::max(cfg.detector.cp_search_max + cfg.detector.cp_window_len,
               cfg.guard ? cfg.outlier.outlier_window : std::size_t{0}) + 1;
  std::deque<std::pair<long, std::string>> times;

  bool have_last = false;
  if (job.resume) {
    monitor.restore(job.resume->state);
    snap.origin = job.resume->origin;
    snap.last_time = job.resume->last_time;
    have_last = true;
    times.assign(job.resume->recent_times.begin(), job.resume->recent_times.end());
  } else if (!job.stream.records.empty()) {
    snap.origin = cfg.covariates.origin.value_or(job.stream.records.front().time);
  }

  auto label = [&](long idx) {
    for (const auto& [i, text] : times)
      if (i == idx) return text;
    return std::to_string(idx);
  };

  for (const auto& rec : job.stream.records) {
    if (have_last && rec.time < snap.last_time) {
      throw ParseError("series '" + job.stream.id + "' goes back in time past the snapshot",
                       rec.row);
    }
    const std::vector<double> x = design_row(rec, cfg, snap.origin);
    MonitorStep r = monitor.step(x, rec.values);
    const long t = monitor.time();
    times.emplace_back(t, rec.time_text);
    while (times.size() > horizon) times.pop_front();
    snap.last_time = rec.time;
    have_last = true;

    if (r.outlier) {
      out.events.push_back({"outlier", label(r.outlier->outlier_time), label(t),
                            r.outlier->posterior_prob});
    }
    if (r.change) {
      out.events.push_back({"change", label(r.change->changepoint_at), label(t),
                            r.change->window_mass});
    }
    if (keep_posteriors) out.posteriors.push_back({t, rec.time_text, std::move(r.posterior)});
  }
  snap.state = monitor.state();
  snap.recent_times.assign(times.begin(), times.end());
  return out;
}

struct DetectOptions {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::string input;
  std::string events;
  std::string posterior_out;
  std::string snapshot;
  std::string resume;
  int threads = 1;
};

std::string events_csv(const std::vector<StreamJob>& jobs, const std::vector<StreamOutput>& outs,
                       bool with_series) {
  std::string text = with_series ? "series," : "";
  text += "kind,changepoint_time,declared_time,posterior_mass\n";
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (const auto& e : outs[i].events) {
      if (with_series) text += jobs[i].stream.id + ",";
      text += e.kind + "," + e.changepoint_time + "," + e.declared_time + "," + num(e.mass) + "\n";
    }
  }
  return text;
}

std::string posterior_csv(const std::vector<StreamJob>& jobs,
                          const std::vector<StreamOutput>& outs, bool with_series) {
  long max_r = 0;
  for (const auto& o : outs)
    for (const auto& p : o.posteriors)
      if (!p.posterior.masses.empty()) max_r = std::max(max_r, p.posterior.masses.back().run_length);
  std::string text = with_series ? "series," : "";
  text += "t,time";
  for (long r = 0; r <= max_r; ++r) text += ",r" + std::to_string(r);
  text += "\n";
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (const auto& p : outs[i].posteriors) {
      if (with_series) text += jobs[i].stream.id + ",";
      text += std::to_string(p.t) + "," + p.time;
      std::vector<double> row(static_cast<std::size_t>(max_r) + 1, 0.0);
      for (const auto& m : p.posterior.masses) row[static_cast<std::size_t>(m.run_length)] = m.probability;
      for (double v : row) text += "," + num(v);
      text += "\n";
    }
  }
  return text;
}

int run_detect(const DetectOptions& opt) {
  RunConfig cfg;
  std::optional<Snapshot> resumed;
  if (!opt.resume.empty()) {
    resumed = load_snapshot(opt.resume);
    load_config_text(cfg, resumed->config_text);
  } else {
    cfg = load_run_config(opt.configs, opt.sets);
  }
  cfg.validate();
  const auto model = std::make_shared<const ConjugateModel>(cfg.effective_prior());

  IngestResult data = ingest(opt.input, cfg.stream);
  std::cerr << "ingested " << data.rows << " rows, " << data.skipped << " skipped\n";

  std::vector<StreamJob> jobs;
  for (auto& s : split_streams(std::move(data.records))) jobs.push_back({std::move(s), nullptr});
  if (resumed) {
    // Streams that only live in the snapshot carry over untouched.
    for (const auto& snap : resumed->streams) {
      auto it = std::find_if(jobs.begin(), jobs.end(),
                             [&](const StreamJob& j) { return j.stream.id == snap.series; });
      if (it == jobs.end()) jobs.push_back({Stream{snap.series, {}}, &snap});
      else it->resume = &snap;
    }
  }

  std::vector<StreamOutput> outs(jobs.size());
  const bool keep_post = !opt.posterior_out.empty();
  parallel_for(jobs.size(), opt.threads,
               [&](std::size_t i) { outs[i] = process_stream(jobs[i], cfg, model, keep_post); });

  const bool with_series = !cfg.stream.series_column.empty();
  write_file(opt.events, events_csv(jobs, outs, with_series));
  if (keep_post) write_file(opt.posterior_out, posterior_csv(jobs, outs, with_series));
  if (!opt.snapshot.empty()) {
    Snapshot snap;
    snap.config_text = format_config(cfg);
    for (auto& o : outs) snap.streams.push_back(std::move(o.snapshot));
    save_snapshot(snap, opt.snapshot);
  }
  return kExitOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
  int case_id = 1;
  int reps = 1;
  std::uint64_t seed = 1;
  std::string out;
  std::string truth;
};

int run_simulate(const SimulateOptions& opt) {
  const ScenarioSpec spec = scenario(opt.case_id);
  const auto series = batch(spec, opt.reps, opt.seed);
  std::string data = "series,t,x1,x2,x3,y1,y2\n";
  std::string truth = "series,true_changepoint,outlier_time,seed\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ls = series[s];
    const std::string id = std::to_string(s + 1);
    for (std::size_t i = 0; i < ls.Y.rows(); ++i) {
      data += id + "," + std::to_string(i + 1);
      for (std::size_t j = 0; j < ls.X.cols(); ++j) data += "," + num(ls.X(i, j));
      for (std::size_t j = 0; j < ls.Y.cols(); ++j) data += "," + num(ls.Y(i, j));
      data += "\n";
    }
    truth += id + "," + std::to_string(ls.true_changepoint) + "," +
             std::to_string(ls.outlier_time) + "," + std::to_string(ls.seed) + "\n";
  }
  write_file(opt.out, data);
  if (!opt.truth.empty()) write_file(opt.truth, truth);
  return kExitOk;
}

// ---- evaluate --------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line;

  std::optional<std::size_t> column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }
  std::size_t require(const std::string& name, const std::string& file) const {
    auto c = column(name);
    if (!c) throw SchemaError(file + ": missing column '" + name + "'");
    return *c;
  }
};

Table read_table(const std::string& path) {
  std::istringstream in(read_file(path));
  Table t;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(path + ": expected " + std::to_string(t.header.size()) + " fields", lineno - 1);
    }
    t.rows.push_back(std::move(fields));
    t.line.push_back(lineno - 1);
  }
  if (t.header.empty()) throw SchemaError(path + ": empty file");
  return t;
}

// Event times are either observation indices or dates.
long parse_time(const std::string& text, long row) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return static_cast<long>(parse_date(text, row));
}

struct EvaluateOptions {
  std::string declared;
  std::string truth;
  long tol = 5;
  std::string report;
};

int run_evaluate(const EvaluateOptions& opt) {
  const Table truth = read_table(opt.truth);
  const std::size_t t_cp = truth.require("true_changepoint", opt.truth);
  const auto t_series = truth.column("series");

  const Table decl = read_table(opt.declared);
  const std::size_t d_kind = decl.require("kind", opt.declared);
  const std::size_t d_cp = decl.require("changepoint_time", opt.declared);
  const std::size_t d_at = decl.require("declared_time", opt.declared);
  const auto d_series = decl.column("series");
  if (!d_series && truth.rows.size() != 1) {
    throw SchemaError(opt.declared + ": no series column, so the truth file must have one row");
  }

  std::map<std::string, std::vector<Declaration>> by_series;
  for (std::size_t i = 0; i < decl.rows.size(); ++i) {
    const auto& row = decl.rows[i];
    if (row[d_kind] != "change") continue;
    const std::string id = d_series ? row[*d_series] : std::string();
    by_series[id].push_back({parse_time(row[d_cp], decl.line[i]), parse_time(row[d_at], decl.line[i])});
  }

  std::vector<SeriesScore> scores;
  for (std::size_t i = 0; i < truth.rows.size(); ++i) {
    const auto& row = truth.rows[i];
    const std::string id = d_series && t_series ? row[*t_series] : std::string();
    auto& declared = by_series[id];
    std::stable_sort(declared.begin(), declared.end(),
                     [](const Declaration& a, const Declaration& b) { return a.declared_at < b.declared_at; });
    scores.push_back(score_series(declared, parse_time(row[t_cp], truth.line[i]), opt.tol));
  }
  const std::vector<ReportRow> rows{{"all", aggregate(scores)}};
  std::cout << report_text(rows);
  if (!opt.report.empty()) write_file(opt.report, report_csv(rows));
  return kExitOk;
}

// ---- estimate-priors -------------------------------------------------------

struct EstimateOptions {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::vector<std::string> inputs;
  std::string out;
};

int run_estimate(const EstimateOptions& opt) {
  const RunConfig cfg = load_run_config(opt.configs, opt.sets);
  std::vector<SegmentFit> fits;
  std::size_t k = 0;
  const std::size_t d = cfg.stream.value_columns.size();
  for (const auto& path : opt.inputs) {
    IngestResult data = ingest(path, cfg.stream);
    for (const auto& s : split_streams(std::move(data.records))) {
      if (s.records.empty()) continue;
      const double origin = cfg.covariates.origin.value_or(s.records.front().time);
      std::vector<std::vector<double>> xs, ys;
      for (const auto& rec : s.records) {
        xs.push_back(design_row(rec, cfg, origin));
        ys.push_back(rec.values);
      }
      k = xs.front().size();
      try {
        fits.push_back(fit_segment(Matrix::from_rows(xs), Matrix::from_rows(ys)));
      } catch (const Error&) {
        std::cerr << "while fitting " << path << " segment '" << s.id << "'\n";
        throw;
      }
    }
  }
  const Hyperparameters eta = estimate_hyperparameters(fits, d, k);
  std::cerr << "estimated from " << fits.size() << " segments, nu0 = " << eta.nu0 << "\n";
  write_file(opt.out, format_prior(eta));
  return kExitOk;
}

// ---- sweep -----------------------------------------------------------------

// Splits on commas outside brackets, so array values survive.
std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct SweepOptions {
  std::string cases = "4";
  int reps = 100;
  std::uint64_t seed = 1000;
  long tol = 5;
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::string report;
  int threads = 1;
};

int run_sweep(const SweepOptions& opt) {
  std::vector<int> cases;
  for (const auto& c : split_values(opt.cases)) {
    try {
      cases.push_back(std::stoi(c));
    } catch (const std::exception&) {
      throw InvalidSpec("sweep: bad case '" + c + "'");
    }
  }
  // Each --set key=a,b,c is one axis of the grid.
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& s : opt.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw InvalidConfig("sweep: expected key=v1,v2,..., got '" + s + "'");
    axes.emplace_back(s.substr(0, eq), split_values(s.substr(eq + 1)));
  }
  std::size_t combos = 1;
  for (const auto& a : axes) combos *= a.second.size();

  std::vector<ReportRow> rows;
  for (int case_id : cases) {
    const ScenarioSpec spec = scenario(case_id);
    for (std::size_t c = 0; c < combos; ++c) {
      RunConfig cfg = load_run_config(opt.configs, {});
      std::string label = "case " + std::to_string(case_id);
      std::size_t rem = c;
      std::vector<std::string> picked(axes.size());
      for (std::size_t a = axes.size(); a-- > 0;) {
        picked[a] = axes[a].second[rem % axes[a].second.size()];
        rem /= axes[a].second.size();
      }
      for (std::size_t a = 0; a < axes.size(); ++a) {
        apply_override(cfg, axes[a].first + "=" + picked[a]);
        label += " " + axes[a].first + "=" + picked[a];
      }
      if (!cfg.eta) cfg.eta = simulation_prior(spec.seasonal);
      MonitorSettings settings{cfg.effective_prior(), cfg.detector,
                               cfg.guard ? std::optional(cfg.outlier) : std::nullopt};
      settings.detector.validate();
      if (settings.guard) settings.guard->validate(settings.eta.d());
      const ScenarioResult res =
          run_scenario(spec, settings, opt.reps, opt.seed, opt.tol, opt.threads);
      rows.push_back({label, res.report});
    }
  }
  std::cout << report_text(rows);
  if (!opt.report.empty()) write_file(opt.report, report_csv(rows));
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Multivariate Bayesian online changepoint detection with outlier removal", "bocpd"};
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate labeled scenario series");
  simulate->add_option("--case", sim.case_id, "Scenario 1-9")->required()->check(CLI::Range(1, 9));
  simulate->add_option("--reps", sim.reps, "Number of series")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "Seed of the first series");
  simulate->add_option("--out", sim.out, "Series CSV (series,t,x1,x2,x3,y1,y2)")->required();
  simulate->add_option("--truth", sim.truth, "Truth CSV (series,true_changepoint,outlier_time,seed)");

  DetectOptions det;
  auto* detect = app.add_subcommand("detect", "Run the detector over a CSV");
  detect->add_option("--config", det.configs, "Config file; later files override earlier ones");
  detect->add_option("--set", det.sets, "Override, section.key=value");
  detect->add_option("--input", det.input, "Input CSV")->required();
  detect->add_option("--events", det.events, "Events CSV (default: stdout)");
  detect->add_option("--posterior-out", det.posterior_out, "Run-length posterior matrix CSV");
  detect->add_option("--snapshot", det.snapshot, "Write detector state here at the end");
  detect->add_option("--threads", det.threads, "Worker threads across streams")
      ->check(CLI::PositiveNumber);

  DetectOptions rep;
  auto* replay = app.add_subcommand("replay", "Resume from a snapshot with new observations");
  replay->add_option("--resume", rep.resume, "Snapshot to resume from")->required();
  replay->add_option("--input", rep.input, "CSV with the observations after the snapshot")->required();
  replay->add_option("--events", rep.events, "Events CSV (default: stdout)");
  replay->add_option("--posterior-out", rep.posterior_out, "Run-length posterior matrix CSV");
  replay->add_option("--snapshot", rep.snapshot, "Write the updated state here");
  replay->add_option("--threads", rep.threads, "Worker threads across streams")
      ->check(CLI::PositiveNumber);

  EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate-priors", "Fit prior hyperparameters from stable segments");
  estimate->add_option("--config", est.configs, "Config file for the column mapping and covariates");
  estimate->add_option("--set", est.sets, "Override, section.key=value");
  estimate->add_option("--input", est.inputs, "Segment CSVs; each series is one segment")->required();
  estimate->add_option("--out", est.out, "Prior file (default: stdout)");

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score declared changepoints against the truth");
  evaluate->add_option("--declared", ev.declared, "Events CSV")->required();
  evaluate->add_option("--truth", ev.truth, "Truth CSV")->required();
  evaluate->add_option("--tol", ev.tol, "Hit tolerance in time units")->check(CLI::NonNegativeNumber);
  evaluate->add_option("--report", ev.report, "Also write the report as CSV");

  SweepOptions sw;
  auto* sweep = app.add_subcommand("sweep", "Score scenarios over a grid of config overrides");
  sweep->add_option("--case", sw.cases, "Scenario ids, comma separated");
  sweep->add_option("--reps", sw.reps, "Series per grid cell")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sw.seed, "Seed of the first series");
  sweep->add_option("--tol", sw.tol, "Hit tolerance")->check(CLI::NonNegativeNumber);
  sweep->add_option("--config", sw.configs, "Base config files");
  sweep->add_option("--set", sw.sets, "Grid axis, section.key=v1,v2,...");
  sweep->add_option("--report", sw.report, "Also write the table as CSV");
  sweep->add_option("--threads", sw.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*detect) return run_detect(det);
    if (*replay) return run_detect(rep);
    if (*estimate) return run_estimate(est);
    if (*evaluate) return run_evaluate(ev);
    if (*sweep) return run_sweep(sw);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args);
}

}  // namespace bocpd
