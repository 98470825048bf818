#pragma once

#include <span>
#include <string>
#include <vector>

#include "spectranet/autodiff/tensor.hpp"
#include "spectranet/core/error.hpp"
#include "spectranet/model/backbone.hpp"
#include "spectranet/sim/frame.hpp"

namespace spectranet::model {

/// Standardized frames held in memory as float32, with integer labels.
struct LabeledSet {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // size() * height * width
  std::vector<int> labels;
  std::vector<double> dnmed;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] bool empty() const { return labels.empty(); }
  [[nodiscard]] std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }

  void add(const sim::Frame& f, int label, double dn = 0.0) {
    if (empty() && data.empty()) {
      height = static_cast<int>(f.height);
      width = static_cast<int>(f.width);
    } else if (static_cast<int>(f.height) != height || static_cast<int>(f.width) != width) {
      throw ShapeError("frame dimensions differ within a labeled set");
    }
    const std::size_t off = data.size();
    data.resize(off + frame_size());
    standardize_into<float>(f.pixels, std::span<float>(data.data() + off, frame_size()));
    labels.push_back(label);
    dnmed.push_back(dn);
  }

  template <class T = float>
  [[nodiscard]] ad::Var<T> batch(std::span<const std::size_t> idx) const {
    auto x = ad::make_var<T>({static_cast<int>(idx.size()), 1, height, width});
    const std::size_t fs = frame_size();
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[i] * fs), fs,
                  x->values.begin() + static_cast<std::ptrdiff_t>(i * fs));
    return x;
  }

  [[nodiscard]] std::vector<int> batch_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
    return out;
  }
};

/// Consecutive index ranges of at most `batch_size`; a trailing singleton is
/// merged into the previous batch so batchnorm always sees >= 2 items.
inline std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  for (std::size_t s = 0; s < n; s += batch_size) {
    std::vector<std::size_t> b;
    for (std::size_t i = s; i < std::min(n, s + batch_size); ++i) b.push_back(i);
    out.push_back(std::move(b));
  }
  if (out.size() >= 2 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

}  // namespace spectranet::model
