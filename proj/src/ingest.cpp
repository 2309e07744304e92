#include "bocpd/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bocpd/error.hpp"

namespace bocpd {

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool parse_value(const std::string& text, double& out) {
  const std::string s = strip(text);
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size() && std::isfinite(out);
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(strip(cur));
  return out;
}

double parse_date(const std::string& text, long row) {
  const std::string s = strip(text);
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char dash1 = 0;
  char dash2 = 0;
  std::istringstream in(s);
  in >> y >> dash1 >> m >> dash2 >> d;
  if (!in || dash1 != '-' || dash2 != '-' || !in.eof()) {
    throw ParseError("malformed date '" + s + "', expected YYYY-MM-DD", row);
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw ParseError("invalid date '" + s + "'", row);
  return static_cast<double>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

IngestResult ingest_text(const std::string& text, const StreamMapping& mapping) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("input has no header row");
  const std::vector<std::string> header = split_csv_line(line);

  const std::size_t time_col = column_index(header, mapping.time_column);
  std::vector<std::size_t> value_cols;
  for (const auto& c : mapping.value_columns) value_cols.push_back(column_index(header, c));
  std::vector<std::size_t> cov_cols;
  for (const auto& c : mapping.covariate_columns) cov_cols.push_back(column_index(header, c));
  const bool has_qa = !mapping.qa_column.empty();
  const std::size_t qa_col = has_qa ? column_index(header, mapping.qa_column) : 0;
  const bool has_series = !mapping.series_column.empty();
  const std::size_t series_col = has_series ? column_index(header, mapping.series_column) : 0;

  IngestResult out;
  std::map<std::string, double> last_time;
  long row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (strip(line).empty()) continue;
    ++out.rows;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()),
                       row);
    }
    ObservationRecord rec;
    rec.row = row;
    rec.series = has_series ? f[series_col] : std::string();
    rec.time_text = f[time_col];
    if (mapping.time_format == TimeFormat::date) {
      rec.time = parse_date(rec.time_text, row);
    } else if (!parse_value(rec.time_text, rec.time)) {
      throw ParseError("malformed time index '" + rec.time_text + "'", row);
    }
    auto [it, fresh] = last_time.try_emplace(rec.series, rec.time);
    if (!fresh) {
      if (rec.time < it->second) throw ParseError("timestamps go backwards", row);
      it->second = rec.time;
    }

    rec.qa_ok = !has_qa || std::find(mapping.qa_ok.begin(), mapping.qa_ok.end(), f[qa_col]) !=
                               mapping.qa_ok.end();
    bool usable = rec.qa_ok;
    for (std::size_t c : value_cols) {
      double v = 0.0;
      if (!usable || !parse_value(f[c], v)) {
        usable = false;
        break;
      }
      rec.values.push_back(v);
    }
    for (std::size_t c : cov_cols) {
      double v = 0.0;
      if (!usable || !parse_value(f[c], v)) {
        usable = false;
        break;
      }
      rec.covariates.push_back(v);
    }
    if (!usable) {
      ++out.skipped;
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

IngestResult ingest(const std::filesystem::path& path, const StreamMapping& mapping) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound("cannot open input " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return ingest_text(buf.str(), mapping);
}

std::vector<Stream> split_streams(std::vector<ObservationRecord> records) {
  std::vector<Stream> out;
  std::map<std::string, std::size_t> index;
  for (auto& r : records) {
    auto [it, fresh] = index.try_emplace(r.series, out.size());
    if (fresh) out.push_back({r.series, {}});
    out[it->second].records.push_back(std::move(r));
  }
  return out;
}

std::vector<double> design_row(const ObservationRecord& rec, const RunConfig& config,
                               double origin) {
  if (config.stream.covariate_columns.empty()) return covariates(rec.time - origin, config.covariates);
  std::vector<double> x;
  x.reserve(rec.covariates.size() + 1);
  if (config.covariates.intercept) x.push_back(1.0);
  x.insert(x.end(), rec.covariates.begin(), rec.covariates.end());
  return x;
}

}  // namespace bocpd
