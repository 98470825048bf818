#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "spectranet/core/error.hpp"

namespace spectranet::ad {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major tensor. `grad` stays empty until a backward pass touches it.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, T fill, bool needs_grad = false)
      : shape(std::move(s)), values(numel(shape), fill), requires_grad(needs_grad) {}

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] int dim(std::size_t i) const { return shape.at(i); }

  std::vector<T>& ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
    return grad;
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
using Var = std::shared_ptr<Tensor<T>>;

template <class T>
Var<T> make_var(Shape shape, T fill = T(0), bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), fill, requires_grad);
}

template <class T>
Var<T> make_var(Shape shape, std::vector<T> values, bool requires_grad = false) {
  if (values.size() != numel(shape))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + to_string(shape));
  auto v = std::make_shared<Tensor<T>>();
  v->shape = std::move(shape);
  v->values = std::move(values);
  v->requires_grad = requires_grad;
  return v;
}

/// Explicit reverse-mode tape. Every primitive appends one node whose closure
/// propagates the output gradient into its inputs; backward() replays them in
/// reverse order, visiting each node exactly once.
template <class T>
class Tape {
 public:
  struct Node {
    const char* op;
    std::function<void()> backward;
  };

  void record(const char* op, std::function<void()> fn) { nodes_.push_back({op, std::move(fn)}); }

  void backward(const Var<T>& loss) {
    if (loss->size() != 1) throw ShapeError("backward() needs a scalar loss, got " + to_string(loss->shape));
    loss->ensure_grad()[0] = T(1);
    visited_ = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->backward();
      ++visited_;
    }
  }

  /// Vector-Jacobian product: seeds `output` with `seed` instead of a unit scalar.
  void backward_from(const Var<T>& output, const std::vector<T>& seed) {
    if (seed.size() != output->size()) throw ShapeError("backward_from seed size mismatch");
    output->ensure_grad() = seed;
    visited_ = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->backward();
      ++visited_;
    }
  }

  void clear() {
    nodes_.clear();
    visited_ = 0;
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] std::size_t visited() const { return visited_; }
  [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

/// Output tensor whose gradient requirement follows its inputs.
template <class T, class... Vs>
Var<T> make_output(Shape shape, const Vs&... inputs) {
  const bool needs = (inputs->requires_grad || ...);
  return make_var<T>(std::move(shape), T(0), needs);
}

}  // namespace spectranet::ad
