#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spectranet/autodiff/tensor.hpp"
#include "spectranet/core/error.hpp"

namespace spectranet::model {

struct LayoutEntry {
  std::string name;
  ad::Shape shape;
  std::size_t offset = 0;
  friend bool operator==(const LayoutEntry&, const LayoutEntry&) = default;
};

struct ParameterLayout {
  std::vector<LayoutEntry> entries;
  std::size_t total = 0;
  friend bool operator==(const ParameterLayout&, const ParameterLayout&) = default;
};

/// Flat, ordered view of every trainable weight. Stored in double so that
/// running averages over many checkpoints stay exact to rounding.
struct ParameterVector {
  std::shared_ptr<const ParameterLayout> layout;
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const { return values.size(); }

  [[nodiscard]] bool compatible(const ParameterVector& other) const {
    if (layout == other.layout) return true;
    return layout && other.layout && *layout == *other.layout;
  }

  /// Same layout, values initialised to `fill`.
  [[nodiscard]] ParameterVector like(double fill = 0.0) const { return {layout, std::vector<double>(size(), fill)}; }
};

inline void require_compatible(const ParameterVector& a, const ParameterVector& b, const char* what) {
  if (!a.compatible(b) || a.size() != b.size())
    throw CheckpointError(std::string("parameter layout mismatch: ") + what);
}

}  // namespace spectranet::model
