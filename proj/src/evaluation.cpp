#include "bocpd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "bocpd/error.hpp"

namespace bocpd {

SeriesScore score_series(std::span<const Declaration> declared, long truth, long tol) {
  SeriesScore s;
  for (const auto& d : declared) {
    if (std::labs(d.changepoint_at - truth) <= tol) {
      if (s.tp == 0) s.latency = static_cast<double>(d.declared_at - d.changepoint_at);
      s.tp = 1;
    } else {
      ++s.fp;
    }
  }
  s.recall = s.tp;
  if (s.tp + s.fp > 0) s.precision = static_cast<double>(s.tp) / (s.tp + s.fp);
  if (s.precision + s.recall > 0.0) {
    s.f_score = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

Metric summarize(std::span<const double> values) {
  Metric m;
  m.n = static_cast<long>(values.size());
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.se = std::sqrt(ss / static_cast<double>(m.n - 1)) / std::sqrt(static_cast<double>(m.n));
  }
  return m;
}

ScoreReport aggregate(std::span<const SeriesScore> scores) {
  if (scores.empty()) throw TooFewObservations("aggregate: no series");
  std::vector<double> tp, fp, p, r, f, lat, ms;
  for (const auto& s : scores) {
    tp.push_back(s.tp);
    fp.push_back(s.fp);
    p.push_back(s.precision);
    r.push_back(s.recall);
    f.push_back(s.f_score);
    if (s.step_ms > 0.0) ms.push_back(s.step_ms);  // 0: not timed (scored from a file)
    if (s.latency) lat.push_back(*s.latency);
  }
  ScoreReport out;
  out.series = static_cast<long>(scores.size());
  out.tp = summarize(tp);
  out.fp = summarize(fp);
  out.precision = summarize(p);
  out.recall = summarize(r);
  out.f_score = summarize(f);
  out.latency = summarize(lat);
  out.step_ms = summarize(ms);
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string cell(const Metric& m) {
  if (m.n == 0) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f(%.3f)", m.mean, m.se);
  return buf;
}

}  // namespace

std::string report_csv(std::span<const ReportRow> rows) {
  std::string out =
      "label,series,tp,tp_se,fp,fp_se,precision,precision_se,recall,recall_se,f_score,f_score_se,"
      "latency,latency_se,step_ms,step_ms_se\n";
  for (const auto& row : rows) {
    const ScoreReport& r = row.report;
    out += row.label + "," + std::to_string(r.series);
    for (const Metric* m : {&r.tp, &r.fp, &r.precision, &r.recall, &r.f_score, &r.latency,
                            &r.step_ms}) {
      out += "," + (m->n ? fmt(m->mean) : std::string("NA")) + "," +
             (m->n ? fmt(m->se) : std::string("NA"));
    }
    out += "\n";
  }
  return out;
}

std::string report_text(std::span<const ReportRow> rows) {
  const std::vector<std::string> header = {"label", "n",  "TP",      "FP",
                                           "F",     "latency", "ms/step"};
  std::vector<std::vector<std::string>> table{header};
  for (const auto& row : rows) {
    const ScoreReport& r = row.report;
    table.push_back({row.label, std::to_string(r.series), cell(r.tp), cell(r.fp), cell(r.f_score),
                     cell(r.latency), cell(r.step_ms)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : table)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::string out;
  for (const auto& line : table) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += line[i];
      if (i + 1 < line.size()) out += std::string(width[i] - line[i].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

}  // namespace bocpd
