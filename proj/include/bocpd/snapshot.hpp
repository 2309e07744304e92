#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bocpd/outlier_guard.hpp"

namespace bocpd {

inline constexpr const char* kSnapshotMagic = "bocpd-detector-state";
inline constexpr int kSnapshotVersion = 1;

struct StreamSnapshot {
  std::string series;
  double origin = 0.0;     ///< covariate time origin fixed at the stream's first record
  double last_time = 0.0;  ///< timestamp of the last consumed record
  GuardedState state;
  /// (observation index, timestamp text) for recent observations, so events that
  /// reference them can still be labeled after a resume.
  std::vector<std::pair<long, std::string>> recent_times;
};

struct Snapshot {
  std::string config_text;  ///< full run config, see format_config
  std::vector<StreamSnapshot> streams;
};

/// JSON text with a magic string and format version. Doubles round-trip exactly.
std::string snapshot_to_text(const Snapshot& snap);

/// Throws SchemaError on a wrong magic string, version, or malformed content.
Snapshot snapshot_from_text(const std::string& text);

void save_snapshot(const Snapshot& snap, const std::filesystem::path& path);
Snapshot load_snapshot(const std::filesystem::path& path);

}  // namespace bocpd
