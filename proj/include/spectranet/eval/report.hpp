#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spectranet/core/error.hpp"
#include "spectranet/eval/metrics.hpp"

namespace spectranet::eval {

namespace detail {

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v, int digits = 6) { return v ? fmt(*v, digits) : "NA"; }

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write '" + p.string() + "'");
  return os;
}

}  // namespace detail

struct SizeRow {
  std::size_t examples_per_class = 0;
  std::string policy;
  std::string method;
  std::vector<std::pair<std::size_t, double>> top_k;  // (k, accuracy)
  double ece = 0.0;
  double best_T = 1.0;
  double ece_at_best_T = 0.0;

  [[nodiscard]] double top(std::size_t k) const {
    for (const auto& [kk, v] : top_k)
      if (kk == k) return v;
    throw ConfigError("top-" + std::to_string(k) + " accuracy was not computed");
  }
};

inline void write_accuracy_vs_size(const std::filesystem::path& p, const std::vector<SizeRow>& rows) {
  auto os = detail::open_out(p);
  os << "examples_per_class,policy,method";
  if (!rows.empty())
    for (const auto& [k, _] : rows.front().top_k) os << ",top" << k;
  os << ",ece,best_T,ece_at_best_T\n";
  for (const auto& r : rows) {
    os << r.examples_per_class << ',' << r.policy << ',' << r.method;
    for (const auto& [_, v] : r.top_k) os << ',' << detail::fmt(v);
    os << ',' << detail::fmt(r.ece) << ',' << detail::fmt(r.best_T, 2) << ',' << detail::fmt(r.ece_at_best_T) << '\n';
  }
}

inline void write_reliability(const std::filesystem::path& p, const CalibrationReport& rep) {
  auto os = detail::open_out(p);
  os << "bin_lo,bin_hi,count,confidence,accuracy,mass\n";
  for (const auto& b : rep.bins)
    os << detail::fmt(b.lo) << ',' << detail::fmt(b.hi) << ',' << b.count << ',' << detail::fmt(b.confidence) << ','
       << detail::fmt(b.accuracy) << ',' << detail::fmt(b.mass) << '\n';
}

inline void write_confusion(const std::filesystem::path& p, const ConfusionMatrix& m,
                            const std::vector<std::string>& names) {
  if (names.size() != m.n_classes) throw ShapeError("class name count does not match the confusion matrix");
  auto os = detail::open_out(p);
  os << "true\\predicted";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < m.n_classes; ++i) {
    os << names[i];
    for (std::size_t j = 0; j < m.n_classes; ++j) os << ',' << m.counts[i][j];
    os << '\n';
  }
}

inline void write_class_stats(const std::filesystem::path& p, const ConfusionMatrix& m,
                              const std::vector<std::string>& names) {
  if (names.size() != m.n_classes) throw ShapeError("class name count does not match the confusion matrix");
  auto os = detail::open_out(p);
  os << "Class,Precision,Recall,F1\n";
  const auto stats = m.class_stats();
  for (std::size_t i = 0; i < m.n_classes; ++i)
    os << names[i] << ',' << detail::fmt(stats[i].precision, 3) << ',' << detail::fmt(stats[i].recall, 3) << ','
       << detail::fmt(stats[i].f1, 3) << '\n';
}

inline void write_accuracy_vs_dnmed(const std::filesystem::path& p, const std::vector<DnmedBin>& bins) {
  auto os = detail::open_out(p);
  os << "bin_lo,bin_hi,bin_center,count,accuracy,empty\n";
  for (const auto& b : bins)
    os << detail::fmt(b.lo, 1) << ',' << detail::fmt(b.hi, 1) << ',' << detail::fmt(b.center(), 1) << ',' << b.count
       << ',' << detail::fmt(b.accuracy) << ',' << (b.accuracy ? 0 : 1) << '\n';
}

/// One row per (method, threshold); threshold 0 is the unfiltered baseline.
inline void write_abstention(const std::filesystem::path& p,
                             const std::vector<std::pair<std::string, std::vector<AbstainResult>>>& rows) {
  auto os = detail::open_out(p);
  os << "method,threshold,percent_uncertain,top1,top3\n";
  for (const auto& [method, results] : rows)
    for (const auto& r : results)
      os << method << ',' << detail::fmt(r.threshold, 2) << ',' << detail::fmt(100.0 * r.fraction_uncertain, 2) << ','
         << (r.top1 ? detail::fmt(100.0 * *r.top1, 2) : "NA") << ','
         << (r.top3 ? detail::fmt(100.0 * *r.top3, 2) : "NA") << '\n';
}

// ---------------------------------------------------------------------------
// SVG plots

inline void write_reliability_svg(const std::filesystem::path& p, const CalibrationReport& rep,
                                  const std::string& title) {
  const double W = 420, H = 420, m = 50, pw = W - 2 * m, ph = H - 2 * m;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" << title
    << " (ECE " << detail::fmt(rep.ece, 3) << ")</text>\n";
  s << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << m << "\" y1=\"" << m + ph << "\" x2=\"" << m + pw << "\" y2=\"" << m
    << "\" stroke=\"gray\" stroke-dasharray=\"4,3\"/>\n";
  for (const auto& b : rep.bins) {
    if (!b.count) continue;
    const double x = m + b.lo * pw, w = (b.hi - b.lo) * pw, h = b.accuracy * ph;
    s << "<rect x=\"" << detail::fmt(x, 2) << "\" y=\"" << detail::fmt(m + ph - h, 2) << "\" width=\""
      << detail::fmt(w, 2) << "\" height=\"" << detail::fmt(h, 2)
      << "\" fill=\"steelblue\" fill-opacity=\"0.7\" stroke=\"navy\"/>\n";
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">confidence</text>\n";
  s << "<text x=\"15\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 15 " << H / 2
    << ")\" text-anchor=\"middle\">accuracy</text>\n</svg>\n";
  auto os = detail::open_out(p);
  os << s.str();
}

inline void write_confusion_svg(const std::filesystem::path& p, const ConfusionMatrix& m,
                                const std::vector<std::string>& names) {
  const double cell = 36, margin = 80;
  const double size = margin + cell * static_cast<double>(m.n_classes) + 10;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < m.n_classes; ++i) {
    std::size_t row = 0;
    for (auto v : m.counts[i]) row += v;
    for (std::size_t j = 0; j < m.n_classes; ++j) {
      const double f = row ? static_cast<double>(m.counts[i][j]) / static_cast<double>(row) : 0.0;
      const int shade = static_cast<int>(255.0 * (1.0 - f));
      const double x = margin + cell * static_cast<double>(j), y = margin + cell * static_cast<double>(i);
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb("
        << shade << ',' << shade << ",255)\" stroke=\"gray\"/>\n";
      s << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
        << "\" text-anchor=\"middle\" font-size=\"10\">" << m.counts[i][j] << "</text>\n";
    }
    s << "<text x=\"" << margin - 4 << "\" y=\"" << margin + cell * static_cast<double>(i) + cell / 2 + 4
      << "\" text-anchor=\"end\" font-size=\"10\">" << names[i] << "</text>\n";
    s << "<text x=\"" << margin + cell * static_cast<double>(i) + cell / 2 << "\" y=\"" << margin - 6
      << "\" text-anchor=\"middle\" font-size=\"10\">" << names[i] << "</text>\n";
  }
  s << "</svg>\n";
  auto os = detail::open_out(p);
  os << s.str();
}

}  // namespace spectranet::eval
