#pragma once

#include <map>
#include <string>

#include "spectranet/core/error.hpp"
#include "spectranet/core/log.hpp"
#include "spectranet/sim/manifest.hpp"

namespace spectranet::metrics {

struct CurationResult {
  sim::Manifest manifest;
  /// class -> (before, after)
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;
};

/// Keeps records with measured_dnmed > threshold. A threshold of 0 disables the
/// cut. Flat frames carry no target signal and are always kept.
inline CurationResult curate(const sim::Manifest& in, double threshold) {
  if (!(threshold >= 0.0)) throw ConfigError("curation threshold must be >= 0");
  CurationResult out{{in.base_dir, {}}, {}};
  for (const auto& r : in.records) {
    auto& counts = out.per_class[r.class_id];
    ++counts.first;
    const bool keep = threshold == 0.0 || r.class_id == sim::kFlatClassId || r.measured_dnmed > threshold;
    if (keep) {
      ++counts.second;
      out.manifest.records.push_back(r);
    }
  }
  if (out.manifest.empty())
    log::warn("curation at threshold " + std::to_string(threshold) + " removed every record");
  return out;
}

}  // namespace spectranet::metrics
