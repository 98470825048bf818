#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spectranet/autodiff/tensor.hpp"
#include "spectranet/core/error.hpp"
#include "spectranet/core/rng.hpp"

namespace spectranet::ad {

// ---------------------------------------------------------------------------
// Batch normalization

enum class BnMode { train, eval };

template <class T>
struct BatchNormState {
  Var<T> gamma;
  Var<T> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  /// When set, train-mode passes average batch statistics cumulatively instead of
  /// with exponential momentum (used to recompute buffers for averaged weights).
  bool cumulative = false;
  std::size_t cumulative_batches = 0;

  explicit BatchNormState(int channels = 0)
      : gamma(make_var<T>({channels}, T(1), true)),
        beta(make_var<T>({channels}, T(0), true)),
        running_mean(static_cast<std::size_t>(channels), 0.0),
        running_var(static_cast<std::size_t>(channels), 1.0) {}

  [[nodiscard]] int channels() const { return gamma->dim(0); }

  void begin_cumulative() {
    cumulative = true;
    cumulative_batches = 0;
    std::fill(running_mean.begin(), running_mean.end(), 0.0);
    std::fill(running_var.begin(), running_var.end(), 0.0);
  }
  void end_cumulative() { cumulative = false; }
};

/// Normalizes each channel of an NCHW (or NC) tensor. Train mode uses batch
/// statistics (biased variance for normalization, unbiased for the running buffer);
/// eval mode uses the running buffers.
template <class T>
Var<T> batchnorm(Tape<T>* tape, const Var<T>& x, BatchNormState<T>& st, BnMode mode) {
  if (x->shape.size() < 2) throw ShapeError("batchnorm expects N x C [x H x W]");
  const int n = x->dim(0), c = x->dim(1);
  if (c != st.channels()) throw ShapeError("batchnorm channel mismatch");
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < x->shape.size(); ++i) spatial *= static_cast<std::size_t>(x->shape[i]);
  const std::size_t m = static_cast<std::size_t>(n) * spatial;
  auto y = make_output<T>(x->shape, x, st.gamma, st.beta);

  std::vector<double> mean(c), inv_std(c);
  if (mode == BnMode::train) {
    if (n < 2) throw ConfigError("batchnorm in train mode needs a batch of at least 2");
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* p = x->values.data() + (static_cast<std::size_t>(i) * c + ch) * spatial;
        for (std::size_t k = 0; k < spatial; ++k) s += p[k];
      }
      const double mu = s / static_cast<double>(m);
      for (int i = 0; i < n; ++i) {
        const T* p = x->values.data() + (static_cast<std::size_t>(i) * c + ch) * spatial;
        for (std::size_t k = 0; k < spatial; ++k) {
          const double d = p[k] - mu;
          s2 += d * d;
        }
      }
      const double var = s2 / static_cast<double>(m);
      const double unbiased = m > 1 ? s2 / static_cast<double>(m - 1) : var;
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + st.epsilon);
      if (st.cumulative) {
        const double k = static_cast<double>(st.cumulative_batches);
        st.running_mean[ch] += (mu - st.running_mean[ch]) / (k + 1.0);
        st.running_var[ch] += (unbiased - st.running_var[ch]) / (k + 1.0);
      } else {
        st.running_mean[ch] = (1.0 - st.momentum) * st.running_mean[ch] + st.momentum * mu;
        st.running_var[ch] = (1.0 - st.momentum) * st.running_var[ch] + st.momentum * unbiased;
      }
    }
    if (st.cumulative) ++st.cumulative_batches;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = st.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(std::max(0.0, st.running_var[ch]) + st.epsilon);
    }
  }

  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * spatial;
      const double g = st.gamma->values[ch], b = st.beta->values[ch];
      for (std::size_t k = 0; k < spatial; ++k)
        y->values[off + k] = static_cast<T>(g * (x->values[off + k] - mean[ch]) * inv_std[ch] + b);
    }

  if (tape && y->requires_grad) {
    tape->record("batchnorm", [x, y, gamma = st.gamma, beta = st.beta, mean, inv_std, mode, n, c, spatial, m] {
      if (y->grad.empty()) return;
      T* dx = x->requires_grad ? x->ensure_grad().data() : nullptr;
      T* dg = gamma->requires_grad ? gamma->ensure_grad().data() : nullptr;
      T* db = beta->requires_grad ? beta->ensure_grad().data() : nullptr;
      for (int ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * spatial;
          for (std::size_t k = 0; k < spatial; ++k) {
            const double dy = y->grad[off + k];
            sum_dy += dy;
            sum_dy_xhat += dy * (x->values[off + k] - mean[ch]) * inv_std[ch];
          }
        }
        if (dg) dg[ch] += static_cast<T>(sum_dy_xhat);
        if (db) db[ch] += static_cast<T>(sum_dy);
        if (!dx) continue;
        const double g = gamma->values[ch];
        const double md = static_cast<double>(m);
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * spatial;
          for (std::size_t k = 0; k < spatial; ++k) {
            const double dy = y->grad[off + k];
            if (mode == BnMode::eval) {
              dx[off + k] += static_cast<T>(g * inv_std[ch] * dy);
            } else {
              const double xhat = (x->values[off + k] - mean[ch]) * inv_std[ch];
              dx[off + k] += static_cast<T>(g * inv_std[ch] / md * (md * dy - sum_dy - xhat * sum_dy_xhat));
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Elementwise and pooling

template <class T>
Var<T> relu(Tape<T>* tape, const Var<T>& x) {
  auto y = make_output<T>(x->shape, x);
  for (std::size_t i = 0; i < x->size(); ++i) y->values[i] = std::max(T(0), x->values[i]);
  if (tape && y->requires_grad) {
    tape->record("relu", [x, y] {
      if (y->grad.empty() || !x->requires_grad) return;
      auto& dx = x->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (x->values[i] > T(0)) dx[i] += y->grad[i];
    });
  }
  return y;
}

/// Residual sum of two equally shaped tensors.
template <class T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  if (a->shape != b->shape) throw ShapeError("add: " + to_string(a->shape) + " vs " + to_string(b->shape));
  auto y = make_output<T>(a->shape, a, b);
  for (std::size_t i = 0; i < a->size(); ++i) y->values[i] = a->values[i] + b->values[i];
  if (tape && y->requires_grad) {
    tape->record("add", [a, b, y] {
      if (y->grad.empty()) return;
      for (const auto& v : {a, b}) {
        if (!v->requires_grad) continue;
        auto& d = v->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += y->grad[i];
      }
    });
  }
  return y;
}

/// N x C x H x W -> N x C spatial mean.
template <class T>
Var<T> global_avg_pool(Tape<T>* tape, const Var<T>& x) {
  if (x->shape.size() != 4) throw ShapeError("global_avg_pool expects NCHW");
  const int n = x->dim(0), c = x->dim(1);
  const std::size_t hw = static_cast<std::size_t>(x->dim(2)) * x->dim(3);
  auto y = make_output<T>({n, c}, x);
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(n) * c; ++nc) {
    double s = 0.0;
    for (std::size_t k = 0; k < hw; ++k) s += x->values[nc * hw + k];
    y->values[nc] = static_cast<T>(s / static_cast<double>(hw));
  }
  if (tape && y->requires_grad) {
    tape->record("global_avg_pool", [x, y, hw] {
      if (y->grad.empty() || !x->requires_grad) return;
      auto& dx = x->ensure_grad();
      const T scale = T(1) / static_cast<T>(hw);
      for (std::size_t nc = 0; nc < y->size(); ++nc)
        for (std::size_t k = 0; k < hw; ++k) dx[nc * hw + k] += y->grad[nc] * scale;
    });
  }
  return y;
}

/// y = x W^T + b with x: N x F, W: O x F, b: O.
template <class T>
Var<T> dense(Tape<T>* tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (x->shape.size() != 2 || w->shape.size() != 2 || b->shape.size() != 1 || x->dim(1) != w->dim(1) ||
      w->dim(0) != b->dim(0))
    throw ShapeError("dense: x " + to_string(x->shape) + ", W " + to_string(w->shape) + ", b " + to_string(b->shape));
  const int n = x->dim(0), f = x->dim(1), o = w->dim(0);
  auto y = make_output<T>({n, o}, x, w, b);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < o; ++j) {
      double s = b->values[j];
      for (int k = 0; k < f; ++k) s += static_cast<double>(x->values[i * f + k]) * w->values[j * f + k];
      y->values[i * o + j] = static_cast<T>(s);
    }
  if (tape && y->requires_grad) {
    tape->record("dense", [x, w, b, y, n, f, o] {
      if (y->grad.empty()) return;
      T* dx = x->requires_grad ? x->ensure_grad().data() : nullptr;
      T* dw = w->requires_grad ? w->ensure_grad().data() : nullptr;
      T* db = b->requires_grad ? b->ensure_grad().data() : nullptr;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) {
          const T g = y->grad[i * o + j];
          if (db) db[j] += g;
          for (int k = 0; k < f; ++k) {
            if (dw) dw[j * f + k] += g * x->values[i * f + k];
            if (dx) dx[i * f + k] += g * w->values[j * f + k];
          }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Dropout

enum class DropoutMode { train, mc_infer, off };

/// Inverted dropout: kept units are scaled by 1/(1-rate), so `off` is the identity.
template <class T>
Var<T> dropout(Tape<T>* tape, const Var<T>& x, double rate, DropoutMode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (mode == DropoutMode::off || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x->size());
  for (auto& mk : mask) mk = keep(rng) ? scale : T(0);
  auto y = make_output<T>(x->shape, x);
  for (std::size_t i = 0; i < x->size(); ++i) y->values[i] = x->values[i] * mask[i];
  if (tape && y->requires_grad) {
    tape->record("dropout", [x, y, mask = std::move(mask)] {
      if (y->grad.empty() || !x->requires_grad) return;
      auto& dx = x->ensure_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += y->grad[i] * mask[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Softmax and loss

/// Row-wise softmax in double precision with max subtraction.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

template <class T>
std::vector<std::vector<double>> softmax_rows(const Tensor<T>& logits) {
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(c));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) row[j] = logits.values[i * c + j];
    out[i] = softmax(row);
  }
  return out;
}

/// Mean cross-entropy of N x C logits against integer labels. Returns a scalar;
/// its gradient with respect to the logits is (softmax - onehot) / N.
template <class T>
Var<T> softmax_xent(Tape<T>* tape, const Var<T>& logits, std::span<const int> labels) {
  if (logits->shape.size() != 2) throw ShapeError("softmax_xent expects N x C logits");
  const int n = logits->dim(0), c = logits->dim(1);
  if (static_cast<int>(labels.size()) != n) throw ShapeError("label count does not match batch");
  for (int l : labels)
    if (l < 0 || l >= c) throw DataError("label " + std::to_string(l) + " outside [0, " + std::to_string(c) + ")");
  const auto probs = softmax_rows(*logits);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) loss -= std::log(std::max(probs[i][labels[i]], 1e-300));
  loss /= n;
  auto y = make_output<T>({1}, logits);
  y->values[0] = static_cast<T>(loss);
  if (tape && y->requires_grad) {
    std::vector<int> lab(labels.begin(), labels.end());
    tape->record("softmax_xent", [logits, y, probs, lab = std::move(lab), n, c] {
      if (y->grad.empty() || !logits->requires_grad) return;
      auto& d = logits->ensure_grad();
      const double g = static_cast<double>(y->grad[0]) / n;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
          d[i * c + j] += static_cast<T>(g * (probs[i][j] - (j == lab[i] ? 1.0 : 0.0)));
    });
  }
  return y;
}

}  // namespace spectranet::ad
