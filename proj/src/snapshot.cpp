#include "bocpd/snapshot.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

using nlohmann::json;

// JSON has no infinities; a dead hypothesis keeps log weight -inf.
json real(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double real(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw SchemaError("snapshot: expected a number");
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) r.push_back(real(m(i, j)));
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix matrix_from(const json& j) {
  if (!j.is_array()) throw SchemaError("snapshot: matrix must be an array");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) {
    if (!r.is_array()) throw SchemaError("snapshot: matrix row must be an array");
    std::vector<double> row;
    for (const auto& x : r) row.push_back(real(x));
    rows.push_back(std::move(row));
  }
  try {
    return Matrix::from_rows(rows);
  } catch (const DimensionMismatch&) {
    throw SchemaError("snapshot: ragged matrix");
  }
}

json hypotheses_json(const std::vector<RunHypothesis>& hyps) {
  json out = json::array();
  for (const auto& h : hyps) {
    out.push_back({{"r", h.run_length},
                   {"log_joint", real(h.log_joint)},
                   {"log_marginal", real(h.log_marginal)},
                   {"n", h.stats.n},
                   {"G", matrix_json(h.stats.G)},
                   {"H", matrix_json(h.stats.H)},
                   {"K", matrix_json(h.stats.K)}});
  }
  return out;
}

std::vector<RunHypothesis> hypotheses_from(const json& j) {
  std::vector<RunHypothesis> out;
  for (const auto& h : j) {
    RunHypothesis r;
    r.run_length = h.at("r").get<long>();
    r.log_joint = real(h.at("log_joint"));
    r.log_marginal = real(h.at("log_marginal"));
    r.stats.n = h.at("n").get<long>();
    r.stats.G = SymMatrix(matrix_from(h.at("G")));
    r.stats.H = SymMatrix(matrix_from(h.at("H")));
    r.stats.K = matrix_from(h.at("K"));
    if (r.stats.K.rows() != r.stats.H.dim() || r.stats.K.cols() != r.stats.G.dim()) {
      throw SchemaError("snapshot: inconsistent statistics dimensions");
    }
    out.push_back(std::move(r));
  }
  return out;
}

json vec_json(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(real(x));
  return out;
}

std::vector<double> vec_from(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(real(x));
  return out;
}

}  // namespace

std::string snapshot_to_text(const Snapshot& snap) {
  json streams = json::array();
  for (const auto& s : snap.streams) {
    const DetectorState& live = s.state.live;
    json bank = json::array();
    for (const auto& e : s.state.bank.entries) {
      bank.push_back({{"time", e.time},
                      {"x", vec_json(e.x)},
                      {"y", vec_json(e.y)},
                      {"hypotheses", hypotheses_json(e.hypotheses)}});
    }
    json times = json::array();
    for (const auto& [idx, text] : s.recent_times) times.push_back({idx, text});
    streams.push_back({{"series", s.series},
                       {"origin", real(s.origin)},
                       {"last_time", real(s.last_time)},
                       {"t", live.t},
                       {"log_evidence", real(live.log_evidence)},
                       {"last_published", live.last_published ? json(*live.last_published) : json()},
                       {"hypotheses", hypotheses_json(live.hypotheses)},
                       {"bank_capacity", s.state.bank.capacity},
                       {"bank", std::move(bank)},
                       {"recent_times", std::move(times)}});
  }
  const json doc = {{"magic", kSnapshotMagic},
                    {"version", kSnapshotVersion},
                    {"config", snap.config_text},
                    {"streams", std::move(streams)}};
  return doc.dump(1) + "\n";
}

Snapshot snapshot_from_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("snapshot is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("magic", "") != kSnapshotMagic) {
    throw SchemaError("not a detector snapshot (bad magic)");
  }
  const int version = doc.value("version", -1);
  if (version != kSnapshotVersion) {
    throw SchemaError("snapshot version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kSnapshotVersion) + ")");
  }
  Snapshot snap;
  try {
    snap.config_text = doc.at("config").get<std::string>();
    for (const auto& s : doc.at("streams")) {
      StreamSnapshot out;
      out.series = s.at("series").get<std::string>();
      out.origin = real(s.at("origin"));
      out.last_time = real(s.at("last_time"));
      out.state.live.t = s.at("t").get<long>();
      out.state.live.log_evidence = real(s.at("log_evidence"));
      if (!s.at("last_published").is_null()) {
        out.state.live.last_published = s.at("last_published").get<long>();
      }
      out.state.live.hypotheses = hypotheses_from(s.at("hypotheses"));
      out.state.bank.capacity = s.at("bank_capacity").get<std::size_t>();
      for (const auto& e : s.at("bank")) {
        ShadowEntry entry;
        entry.time = e.at("time").get<long>();
        entry.x = vec_from(e.at("x"));
        entry.y = vec_from(e.at("y"));
        entry.hypotheses = hypotheses_from(e.at("hypotheses"));
        out.state.bank.entries.push_back(std::move(entry));
      }
      for (const auto& p : s.at("recent_times")) {
        out.recent_times.emplace_back(p.at(0).get<long>(), p.at(1).get<std::string>());
      }
      snap.streams.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed snapshot: ") + e.what());
  }
  return snap;
}

void save_snapshot(const Snapshot& snap, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileNotFound("cannot write snapshot " + path.string());
  out << snapshot_to_text(snap);
  if (!out) throw FileNotFound("failed writing snapshot " + path.string());
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound("cannot open snapshot " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return snapshot_from_text(buf.str());
}

}  // namespace bocpd
