#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/core/error.hpp"
#include "spectranet/sim/orientation.hpp"

namespace spectranet::sim {

inline constexpr const char* kFlatClassId = "flat";

/// One frame of a dataset. `path` is relative to the manifest's directory.
struct ManifestRecord {
  std::string path;
  std::string class_id;
  std::string split;
  Orientation orientation;
  double target_dnmed = 0.0;
  double measured_dnmed = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct Manifest {
  std::filesystem::path base_dir;  // directory the record paths are relative to
  std::vector<ManifestRecord> records;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  [[nodiscard]] bool empty() const { return records.empty(); }
  [[nodiscard]] std::filesystem::path frame_path(const ManifestRecord& r) const { return base_dir / r.path; }

  /// Class ids in order of first appearance.
  [[nodiscard]] std::vector<std::string> class_ids() const {
    std::vector<std::string> out;
    for (const auto& r : records)
      if (std::find(out.begin(), out.end(), r.class_id) == out.end()) out.push_back(r.class_id);
    return out;
  }

  [[nodiscard]] std::map<std::string, std::size_t> class_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& r : records) ++out[r.class_id];
    return out;
  }

  [[nodiscard]] Manifest with_split(const std::string& split) const {
    Manifest m{base_dir, {}};
    for (const auto& r : records)
      if (r.split == split) m.records.push_back(r);
    return m;
  }
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j;
  j["path"] = r.path;
  j["class_id"] = r.class_id;
  j["split"] = r.split;
  j["orientation"] = {r.orientation.theta, r.orientation.phi};
  j["target_dnmed"] = r.target_dnmed;
  j["measured_dnmed"] = r.measured_dnmed;
  j["seed"] = r.seed;
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.path = j.at("path").get<std::string>();
  r.class_id = j.at("class_id").get<std::string>();
  r.split = j.value("split", std::string{});
  const auto& o = j.at("orientation");
  r.orientation = {o.at(0).get<double>(), o.at(1).get<double>()};
  r.target_dnmed = j.at("target_dnmed").get<double>();
  r.measured_dnmed = j.at("measured_dnmed").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

/// JSON-lines, one record per line, keys in fixed order.
inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write manifest '" + path.string() + "'");
  for (const auto& r : m.records) os << to_json(r).dump() << '\n';
  if (!os) throw ConfigError("failed writing manifest '" + path.string() + "'");
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError(path.string(), "simulate");
  Manifest m{path.parent_path(), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace spectranet::sim
