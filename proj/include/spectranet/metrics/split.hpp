#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "spectranet/core/error.hpp"
#include "spectranet/core/log.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/sim/manifest.hpp"

namespace spectranet::metrics {

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

struct SplitAssignment {
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const {
    double s = 0.0;
    for (double f : fractions) {
      if (!(f >= 0.0)) throw ConfigError("split fractions must be nonnegative");
      s += f;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  }
};

namespace detail {

/// Counts per split for n items: largest-remainder rounding of fractions * n.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& f) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = f[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    const auto i = static_cast<std::size_t>(std::max_element(rem.begin(), rem.end()) - rem.begin());
    ++counts[i];
    rem[i] = -1.0;
    ++assigned;
  }
  return counts;
}

inline void assign(std::vector<sim::ManifestRecord*>& rows, const SplitAssignment& a, std::uint64_t stream_index) {
  Rng rng(derive_seed(a.seed, stream::split, stream_index));
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto counts = split_counts(rows.size(), a.fractions);
  std::size_t k = 0;
  for (int s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < counts[s]; ++i) rows[k++]->split = kSplitNames[s];
}

}  // namespace detail

/// Labels every record train/val/test. Deterministic under the seed; stratified
/// assignment splits each class independently.
inline sim::Manifest split(const sim::Manifest& in, const SplitAssignment& a) {
  a.validate();
  if (in.empty()) throw DataError("cannot split an empty manifest");
  sim::Manifest out = in;
  if (!a.stratified) {
    std::vector<sim::ManifestRecord*> rows;
    for (auto& r : out.records) rows.push_back(&r);
    detail::assign(rows, a, 0);
    return out;
  }
  const auto ids = out.class_ids();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    std::vector<sim::ManifestRecord*> rows;
    for (auto& r : out.records)
      if (r.class_id == ids[k]) rows.push_back(&r);
    if (rows.size() < 3)
      log::warn("class '" + ids[k] + "' has " + std::to_string(rows.size()) +
                " examples; stratified split is best-effort");
    detail::assign(rows, a, k + 1);
  }
  return out;
}

inline std::array<double, 3> parse_fractions(const std::string& s) {
  std::array<double, 3> f{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto comma = s.find(',', pos);
    if ((i < 2) == (comma == std::string::npos)) throw ConfigError("fractions must be 'train,val,test'");
    try {
      f[i] = std::stod(s.substr(pos, comma - pos));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse fractions '" + s + "'");
    }
    pos = comma + 1;
  }
  return f;
}

}  // namespace spectranet::metrics
