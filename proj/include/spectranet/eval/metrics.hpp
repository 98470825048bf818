#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "spectranet/core/error.hpp"
#include "spectranet/eval/records.hpp"

namespace spectranet::eval {

/// Fraction of records whose true class ranks in the top k. Ranking sorts by
/// probability descending, lower class index first on ties.
inline double top_k_accuracy(const std::vector<EvalRecord>& records, std::size_t k) {
  if (records.empty()) throw DataError("top_k_accuracy of an empty record set");
  const std::size_t c = records.front().n_classes();
  if (k < 1 || k > c) throw ConfigError("k must be in [1, n_classes]");
  std::size_t hits = 0;
  for (const auto& r : records) {
    const double pt = r.probs[static_cast<std::size_t>(r.true_class)];
    std::size_t ahead = 0;  // classes ranked strictly before the true class
    for (std::size_t i = 0; i < r.probs.size(); ++i)
      if (r.probs[i] > pt || (r.probs[i] == pt && static_cast<int>(i) < r.true_class)) ++ahead;
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

struct ReliabilityBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  double confidence = 0.0;  // mean max-probability (0 when empty)
  double accuracy = 0.0;
  double mass = 0.0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::size_t n_bins = 15;
  std::vector<ReliabilityBin> bins;
  std::optional<double> best_T;
  std::optional<double> ece_at_best_T;
};

/// Equal-width bins on max-probability; a confidence of exactly 1 falls in the last bin.
inline CalibrationReport ece(const std::vector<EvalRecord>& records, std::size_t n_bins = 15) {
  if (records.empty()) throw DataError("ece of an empty record set");
  if (n_bins < 1) throw ConfigError("ece needs n_bins >= 1");
  CalibrationReport rep;
  rep.n_bins = n_bins;
  rep.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0), correct(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    rep.bins[b].lo = static_cast<double>(b) / static_cast<double>(n_bins);
    rep.bins[b].hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
  }
  for (const auto& r : records) {
    const double conf = r.confidence();
    auto b = static_cast<std::size_t>(conf * static_cast<double>(n_bins));
    b = std::min(b, n_bins - 1);
    ++rep.bins[b].count;
    conf_sum[b] += conf;
    if (r.predicted() == r.true_class) correct[b] += 1.0;
  }
  const double n = static_cast<double>(records.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = rep.bins[b];
    if (bin.count == 0) continue;
    const double cnt = static_cast<double>(bin.count);
    bin.confidence = conf_sum[b] / cnt;
    bin.accuracy = correct[b] / cnt;
    bin.mass = cnt / n;
    rep.ece += bin.mass * std::abs(bin.confidence - bin.accuracy);
  }
  return rep;
}

/// k * 0.05 for k = 1..200.
inline std::vector<double> default_temperature_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 200; ++k) g.push_back(k * 0.05);
  return g;
}

struct SweepResult {
  double best_T = 1.0;
  double ece_at_best_T = 0.0;
  std::vector<std::pair<double, double>> curve;  // (T, ece)
};

/// Grid search for the ECE-minimizing temperature; ties go to the smallest T.
inline SweepResult temperature_sweep(const std::vector<EvalRecord>& records,
                                     const std::vector<double>& grid = default_temperature_grid(),
                                     std::size_t n_bins = 15, TemperPoint point = TemperPoint::member) {
  if (grid.empty()) throw ConfigError("temperature grid is empty");
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  SweepResult res;
  bool first = true;
  for (double T : sorted) {
    const double e = ece(temper(records, T, point), n_bins).ece;
    res.curve.emplace_back(T, e);
    if (first || e < res.ece_at_best_T) {
      res.best_T = T;
      res.ece_at_best_T = e;
      first = false;
    }
  }
  return res;
}

inline CalibrationReport calibration_report(const std::vector<EvalRecord>& records, std::size_t n_bins,
                                            const std::vector<double>& grid, TemperPoint point = TemperPoint::member) {
  auto rep = ece(records, n_bins);
  const auto sweep = temperature_sweep(records, grid, n_bins, point);
  rep.best_T = sweep.best_T;
  rep.ece_at_best_T = sweep.ece_at_best_T;
  return rep;
}

struct AbstainResult {
  double threshold = 0.0;
  double fraction_uncertain = 0.0;
  std::size_t n_confident = 0;
  std::optional<double> top1;  // empty when every record abstained
  std::optional<double> top3;
};

/// Records whose largest median-over-members probability is below `threshold`
/// are flagged uncertain; accuracy uses the remaining records.
inline AbstainResult threshold_abstain(const std::vector<EvalRecord>& records, double threshold) {
  if (records.empty()) throw DataError("threshold_abstain of an empty record set");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  std::vector<EvalRecord> kept;
  for (const auto& r : records) {
    const auto& m = r.median_probs.empty() ? r.probs : r.median_probs;
    if (*std::max_element(m.begin(), m.end()) >= threshold) kept.push_back(r);
  }
  AbstainResult out;
  out.threshold = threshold;
  out.n_confident = kept.size();
  out.fraction_uncertain = 1.0 - static_cast<double>(kept.size()) / static_cast<double>(records.size());
  if (!kept.empty()) {
    out.top1 = top_k_accuracy(kept, 1);
    out.top3 = top_k_accuracy(kept, std::min<std::size_t>(3, kept.front().n_classes()));
  }
  return out;
}

struct DnmedBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  std::optional<double> accuracy;  // empty bins are flagged by leaving this unset
  [[nodiscard]] double center() const { return 0.5 * (lo + hi); }
};

/// Top-1 accuracy per DN_med bin [e_i, e_{i+1}); the last bin includes its upper edge.
inline std::vector<DnmedBin> accuracy_by_dnmed(const std::vector<EvalRecord>& records,
                                               const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("need at least two DN_med bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw ConfigError("DN_med bin edges must increase");
  std::vector<DnmedBin> bins(edges.size() - 1);
  std::vector<std::size_t> correct(bins.size(), 0);
  for (std::size_t b = 0; b < bins.size(); ++b) bins[b] = {edges[b], edges[b + 1], 0, std::nullopt};
  for (const auto& r : records) {
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const bool last = b + 1 == bins.size();
      if (r.dnmed >= bins[b].lo && (r.dnmed < bins[b].hi || (last && r.dnmed == bins[b].hi))) {
        ++bins[b].count;
        if (r.predicted() == r.true_class) ++correct[b];
        break;
      }
    }
  }
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (bins[b].count) bins[b].accuracy = static_cast<double>(correct[b]) / static_cast<double>(bins[b].count);
  return bins;
}

/// Average ranks (1-based), ties share their mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Pearson correlation of the ranks. Undefined (nullopt) for fewer than 2 points
/// or a constant input.
inline std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("spearman inputs differ in length");
  if (x.size() < 2) return std::nullopt;
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman correlation of bin center against bin accuracy over non-empty bins.
inline std::optional<double> dnmed_trend(const std::vector<DnmedBin>& bins) {
  std::vector<double> c, a;
  for (const auto& b : bins)
    if (b.accuracy) {
      c.push_back(b.center());
      a.push_back(*b.accuracy);
    }
  return spearman(c, a);
}

struct ClassStats {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]

  [[nodiscard]] std::size_t total() const {
    std::size_t s = 0;
    for (const auto& row : counts) s += std::accumulate(row.begin(), row.end(), std::size_t{0});
    return s;
  }
  [[nodiscard]] double accuracy() const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < n_classes; ++i) d += counts[i][i];
    return static_cast<double>(d) / static_cast<double>(total());
  }
  /// Precision/recall/F1 per class; a zero denominator yields 0.
  [[nodiscard]] std::vector<ClassStats> class_stats() const {
    std::vector<ClassStats> out(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
      std::size_t col = 0, row = 0;
      for (std::size_t k = 0; k < n_classes; ++k) {
        col += counts[k][c];
        row += counts[c][k];
      }
      const double tp = static_cast<double>(counts[c][c]);
      out[c].precision = col ? tp / static_cast<double>(col) : 0.0;
      out[c].recall = row ? tp / static_cast<double>(row) : 0.0;
      const double s = out[c].precision + out[c].recall;
      out[c].f1 = s > 0.0 ? 2.0 * out[c].precision * out[c].recall / s : 0.0;
    }
    return out;
  }
  /// Pooled true positives over pooled row totals.
  [[nodiscard]] double micro_recall() const {
    std::size_t tp = 0, rows = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      tp += counts[c][c];
      rows += std::accumulate(counts[c].begin(), counts[c].end(), std::size_t{0});
    }
    return static_cast<double>(tp) / static_cast<double>(rows);
  }
};

inline ConfusionMatrix confusion_matrix(const std::vector<EvalRecord>& records, std::size_t n_classes = 0) {
  if (records.empty()) throw DataError("confusion matrix of an empty record set");
  if (n_classes == 0) n_classes = records.front().n_classes();
  ConfusionMatrix m;
  m.n_classes = n_classes;
  m.counts.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (const auto& r : records) {
    const auto t = static_cast<std::size_t>(r.true_class);
    const auto p = static_cast<std::size_t>(r.predicted());
    if (t >= n_classes || p >= n_classes) throw DataError("class index outside the confusion matrix");
    ++m.counts[t][p];
  }
  return m;
}

}  // namespace spectranet::eval
