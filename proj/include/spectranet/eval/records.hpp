#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spectranet/autodiff/layers.hpp"
#include "spectranet/bayes/predictive.hpp"
#include "spectranet/core/error.hpp"

namespace spectranet::eval {

/// Where temperature is applied: to each member's logits before averaging, or
/// to the log of the averaged probabilities.
enum class TemperPoint { member, post_ensemble };

inline TemperPoint parse_temper_point(const std::string& s) {
  if (s == "member") return TemperPoint::member;
  if (s == "post_ensemble") return TemperPoint::post_ensemble;
  throw ConfigError("unknown tempering point '" + s + "' (member|post_ensemble)");
}

/// One scored input. `probs` is the ensemble-mean probability vector and
/// `median_probs` the per-class median over members.
struct EvalRecord {
  int true_class = 0;
  std::vector<std::vector<double>> member_logits;
  std::vector<double> probs;
  std::vector<double> median_probs;
  double dnmed = 0.0;
  std::string split = "test";

  [[nodiscard]] std::size_t n_classes() const { return probs.size(); }
  [[nodiscard]] int predicted() const;  // argmax, lowest index on ties
  [[nodiscard]] double confidence() const;
};

namespace detail {

inline int argmax(const std::vector<double>& p) {
  int best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

inline void check_normalized(const std::vector<double>& p) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw DataError("probability vector has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) throw DataError("probability vector does not sum to 1");
}

}  // namespace detail

inline int EvalRecord::predicted() const { return detail::argmax(probs); }
inline double EvalRecord::confidence() const { return probs[static_cast<std::size_t>(predicted())]; }

/// Recomputes probs/median_probs from member logits at temperature T.
inline void apply_temperature(EvalRecord& r, double T, TemperPoint point = TemperPoint::member) {
  if (!(T > 0.0)) throw ConfigError("temperature must be > 0");
  if (r.member_logits.empty()) throw DataError("record has no member logits to temper");
  bayes::PredictiveDistribution d;
  for (const auto& l : r.member_logits) {
    std::vector<double> z(l.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = (point == TemperPoint::member ? l[i] / T : l[i]);
    d.add_logits(std::move(z));
  }
  r.probs = d.mean();
  r.median_probs = d.median();
  if (point == TemperPoint::post_ensemble) {
    std::vector<double> z(r.probs.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::log(std::max(r.probs[i], 1e-300)) / T;
    r.probs = ad::softmax(z);
  }
}

inline EvalRecord make_record(int true_class, std::vector<std::vector<double>> member_logits, double dnmed = 0.0,
                              std::string split = "test") {
  EvalRecord r;
  r.true_class = true_class;
  r.member_logits = std::move(member_logits);
  r.dnmed = dnmed;
  r.split = std::move(split);
  apply_temperature(r, 1.0);
  if (true_class < 0 || static_cast<std::size_t>(true_class) >= r.n_classes())
    throw DataError("true class out of range");
  return r;
}

/// A single-member record whose logits are log-probabilities, so tempering acts
/// on the given distribution directly.
inline EvalRecord record_from_probs(int true_class, const std::vector<double>& probs, double dnmed = 0.0) {
  detail::check_normalized(probs);
  std::vector<double> logits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) logits[i] = std::log(std::max(probs[i], 1e-300));
  EvalRecord r = make_record(true_class, {logits}, dnmed);
  r.probs = probs;
  r.median_probs = probs;
  return r;
}

inline EvalRecord record_from_distribution(int true_class, const bayes::PredictiveDistribution& d, double dnmed = 0.0,
                                           std::string split = "test") {
  return make_record(true_class, d.member_logits, dnmed, std::move(split));
}

/// Copies of `records` at temperature T.
inline std::vector<EvalRecord> temper(const std::vector<EvalRecord>& records, double T,
                                      TemperPoint point = TemperPoint::member) {
  if (!(T > 0.0)) throw ConfigError("temperature must be > 0");
  std::vector<EvalRecord> out = records;
  for (auto& r : out) apply_temperature(r, T, point);
  return out;
}

}  // namespace spectranet::eval
