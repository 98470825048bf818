#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "spectranet/autodiff/layers.hpp"
#include "spectranet/core/error.hpp"

namespace spectranet::bayes {

enum class PredictiveSource { point, dropout, swa, swag, multi_swa, multi_swag };

inline std::string to_string(PredictiveSource s) {
  switch (s) {
    case PredictiveSource::point: return "point";
    case PredictiveSource::dropout: return "dropout";
    case PredictiveSource::swa: return "swa";
    case PredictiveSource::swag: return "swag";
    case PredictiveSource::multi_swa: return "multi_swa";
    case PredictiveSource::multi_swag: return "multi_swag";
  }
  return "point";
}

inline PredictiveSource parse_source(const std::string& s) {
  for (auto v : {PredictiveSource::point, PredictiveSource::dropout, PredictiveSource::swa, PredictiveSource::swag,
                 PredictiveSource::multi_swa, PredictiveSource::multi_swag})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown marginalization '" + s + "'");
}

namespace detail {

/// Sum of values after sorting, so the result does not depend on input order.
inline double order_free_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

/// Linear-interpolated quantile of an unsorted sample (q in [0,1]).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DataError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return v[lo] + f * (v[hi] - v[lo]);
}

}  // namespace detail

/// Per-member logits and softmax vectors for one input.
struct PredictiveDistribution {
  PredictiveSource source = PredictiveSource::point;
  std::vector<std::vector<double>> member_logits;
  std::vector<std::vector<double>> member_probs;

  [[nodiscard]] std::size_t n_members() const { return member_probs.size(); }
  [[nodiscard]] std::size_t n_classes() const { return member_probs.empty() ? 0 : member_probs[0].size(); }

  void add_logits(std::vector<double> logits) {
    member_probs.push_back(ad::softmax(logits));
    member_logits.push_back(std::move(logits));
  }

  /// Arithmetic mean of member softmax vectors.
  [[nodiscard]] std::vector<double> mean() const { return per_class([](std::vector<double> v) {
    const double n = static_cast<double>(v.size());
    return detail::order_free_sum(std::move(v)) / n;
  }); }
  [[nodiscard]] std::vector<double> median() const { return quantile(0.5); }
  [[nodiscard]] std::vector<double> quantile(double q) const {
    return per_class([q](std::vector<double> v) { return detail::quantile(std::move(v), q); });
  }

 private:
  template <class F>
  [[nodiscard]] std::vector<double> per_class(F f) const {
    if (member_probs.empty()) throw DataError("predictive distribution has no members");
    std::vector<double> out(n_classes());
    std::vector<double> col(n_members());
    for (std::size_t c = 0; c < out.size(); ++c) {
      for (std::size_t m = 0; m < n_members(); ++m) col[m] = member_probs[m][c];
      out[c] = f(col);
    }
    return out;
  }
};

/// Concatenates member sets of the same inputs (e.g. one set per trained model).
inline std::vector<PredictiveDistribution> combine(const std::vector<std::vector<PredictiveDistribution>>& parts,
                                                   PredictiveSource source) {
  if (parts.empty()) throw ConfigError("combine needs at least one member set");
  std::vector<PredictiveDistribution> out(parts[0].size());
  for (const auto& p : parts)
    if (p.size() != out.size()) throw ShapeError("member sets cover different numbers of inputs");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].source = source;
    for (const auto& p : parts) {
      out[i].member_logits.insert(out[i].member_logits.end(), p[i].member_logits.begin(), p[i].member_logits.end());
      out[i].member_probs.insert(out[i].member_probs.end(), p[i].member_probs.begin(), p[i].member_probs.end());
    }
  }
  return out;
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

}  // namespace spectranet::bayes
