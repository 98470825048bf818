#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "spectranet/autodiff/tensor.hpp"
#include "spectranet/core/error.hpp"

namespace spectranet::ad {

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// v <- momentum*v + grad + weight_decay*param;  param <- param - lr*v
template <class T>
void sgd_step(std::span<T> params, std::span<const T> grads, std::span<T> velocity, const SgdConfig& cfg,
              const std::string& name = "parameters") {
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (grads.size() != params.size() || velocity.size() != params.size())
    throw ShapeError("sgd_step size mismatch for " + name);
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(static_cast<double>(grads[i])))
      throw TrainingError("non-finite gradient in '" + name + "' at element " + std::to_string(i) + " (value " +
                          std::to_string(static_cast<double>(grads[i])) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v = cfg.momentum * velocity[i] + grads[i] + cfg.weight_decay * params[i];
    velocity[i] = static_cast<T>(v);
    params[i] = static_cast<T>(params[i] - cfg.lr * v);
  }
}

template <class T>
struct ParamRef {
  std::string name;
  Var<T> var;
  bool decay = true;  // weight decay applies (conv/dense weights, not norms or biases)
};

template <class T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<ParamRef<T>> params) : params_(std::move(params)) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.var->size(), T(0));
  }

  void zero_grad() {
    for (auto& p : params_) p.var->ensure_grad(), p.var->zero_grad();
  }

  void step(const SgdConfig& cfg) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      SgdConfig c = cfg;
      if (!p.decay) c.weight_decay = 0.0;
      p.var->ensure_grad();
      sgd_step<T>(p.var->values, std::span<const T>(p.var->grad), velocity_[i], c, p.name);
    }
  }

  [[nodiscard]] const std::vector<ParamRef<T>>& params() const { return params_; }
  [[nodiscard]] std::vector<std::vector<T>>& velocity() { return velocity_; }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace spectranet::ad
