#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bocpd/config.hpp"

namespace bocpd {

struct ObservationRecord {
  std::string series;
  std::string time_text;  ///< timestamp as written in the file
  double time = 0.0;      ///< days since 1970-01-01, or the raw index
  std::vector<double> values;
  std::vector<double> covariates;  ///< only when the mapping names covariate columns
  bool qa_ok = true;
  long row = 0;  ///< 1-based data row in the file
};

struct IngestResult {
  std::vector<ObservationRecord> records;  ///< usable rows, file order
  long rows = 0;
  long skipped = 0;  ///< QA-flagged or incomplete rows
};

/// Reads a headered CSV. Rows failing QA or with a missing/unparseable value are skipped
/// and counted. Throws FileNotFound, SchemaError (missing column), ParseError (bad row).
IngestResult ingest(const std::filesystem::path& path, const StreamMapping& mapping);
IngestResult ingest_text(const std::string& text, const StreamMapping& mapping);

/// YYYY-MM-DD to days since 1970-01-01. Throws ParseError.
double parse_date(const std::string& text, long row = -1);

/// Splits a CSV line on commas, honoring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

struct Stream {
  std::string id;
  std::vector<ObservationRecord> records;
};

/// Groups records by series in order of first appearance.
std::vector<Stream> split_streams(std::vector<ObservationRecord> records);

/// Covariate row for one record. `origin` is the time subtracted before the recipe applies.
std::vector<double> design_row(const ObservationRecord& rec, const RunConfig& config, double origin);

}  // namespace bocpd
