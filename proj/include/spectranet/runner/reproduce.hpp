#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spectranet/eval/report.hpp"
#include "spectranet/runner/pipeline.hpp"

namespace spectranet::runner {

inline const std::vector<std::string>& reproduce_targets() {
  static const std::vector<std::string> t{"table2", "table4", "table6", "figure4", "figure6", "figure7", "all"};
  return t;
}

/// Config of one cell of the dataset-size sweep: point estimate, single model.
inline ExperimentConfig sweep_cell(const ExperimentConfig& base, std::size_t size, sim::OrientationPolicy policy) {
  ExperimentConfig c = base;
  c.dataset.examples_per_class = size;
  c.dataset.policy = policy;
  c.marginalization.methods = {bayes::PredictiveSource::point};
  c.marginalization.n_models = 1;
  return c;
}

struct SweepOutcome {
  std::vector<eval::SizeRow> rows;  // policy-major, sizes ascending
  [[nodiscard]] std::optional<eval::SizeRow> find(std::size_t size, sim::OrientationPolicy p) const {
    for (const auto& r : rows)
      if (r.examples_per_class == size && r.policy == sim::to_string(p)) return r;
    return std::nullopt;
  }
};

namespace detail {

inline void write_size_svg(const fs::path& p, const SweepOutcome& s, const std::vector<sim::OrientationPolicy>& policies) {
  const double W = 480, H = 360, m = 55, pw = W - 2 * m, ph = H - 2 * m;
  std::size_t max_size = 1;
  for (const auto& r : s.rows) max_size = std::max(max_size, r.examples_per_class);
  const char* colors[] = {"steelblue", "darkorange", "seagreen", "firebrick"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\" font-size=\"12\">examples per class</text>\n"
    << "<text x=\"" << W / 2 << "\" y=\"30\" text-anchor=\"middle\" font-size=\"14\">Top-1 accuracy vs dataset size</text>\n";
  for (std::size_t pi = 0; pi < policies.size(); ++pi) {
    std::string pts;
    for (const auto& r : s.rows) {
      if (r.policy != sim::to_string(policies[pi])) continue;
      const double x = m + pw * static_cast<double>(r.examples_per_class) / static_cast<double>(max_size);
      const double y = m + ph * (1.0 - r.top(1));
      pts += eval::detail::fmt(x, 1) + "," + eval::detail::fmt(y, 1) + " ";
      o << "<circle cx=\"" << eval::detail::fmt(x, 1) << "\" cy=\"" << eval::detail::fmt(y, 1) << "\" r=\"3\" fill=\""
        << colors[pi % 4] << "\"/>\n";
    }
    o << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << colors[pi % 4] << "\"/>\n"
      << "<text x=\"" << m + 10 << "\" y=\"" << m + 18 + 16 * static_cast<double>(pi) << "\" font-size=\"12\" fill=\""
      << colors[pi % 4] << "\">" << sim::to_string(policies[pi]) << "</text>\n";
  }
  o << "</svg>\n";
  std::ofstream os(p, std::ios::binary);
  os << o.str();
}

}  // namespace detail

/// Dataset-size sweep over both orientation policies (point estimates).
inline SweepOutcome reproduce_size_sweep(const ExperimentConfig& base, const fs::path& root, const fs::path& out_dir) {
  SweepOutcome s;
  for (auto policy : base.sweep.policies)
    for (auto size : base.sweep.examples_per_class) {
      Pipeline p(sweep_cell(base, size, policy), root);
      const auto summary = p.run_all(out_dir / (std::string(sim::to_string(policy)) + "_" + std::to_string(size)));
      s.rows.push_back(summary.at(bayes::PredictiveSource::point).summary);
    }
  eval::write_accuracy_vs_size(out_dir / "accuracy_vs_size.csv", s.rows);
  return s;
}

struct ReproduceResult {
  std::optional<SweepOutcome> sweep;
  std::optional<EvalSummary> main;
  std::vector<fs::path> csv_files;
};

/// Runs one reproduction target below `root/<target>`; the main experiment is
/// shared between table4/table6/figure6/figure7 through the stage cache.
inline ReproduceResult reproduce(const ExperimentConfig& cfg, const fs::path& root, const std::string& target) {
  if (std::find(reproduce_targets().begin(), reproduce_targets().end(), target) == reproduce_targets().end())
    throw ConfigError("unknown reproduce target '" + target + "'");
  ReproduceResult res;
  const bool all = target == "all";
  auto need_main = [&]() -> const EvalSummary& {
    if (!res.main) {
      Pipeline p(cfg, root);
      res.main = p.run_all(root / "main");
    }
    return *res.main;
  };

  if (all || target == "table2" || target == "figure4") {
    const fs::path dir = root / "table2";
    res.sweep = reproduce_size_sweep(cfg, root, dir);
    if (all || target == "figure4") {
      fs::create_directories(root / "figure4");
      eval::write_accuracy_vs_size(root / "figure4" / "accuracy_vs_size.csv", res.sweep->rows);
      if (cfg.eval.svg) detail::write_size_svg(root / "figure4" / "figure4.svg", *res.sweep, cfg.sweep.policies);
    }
  }
  if (all || target == "table4") {
    const auto& m = need_main();
    std::vector<std::pair<std::string, std::vector<eval::AbstainResult>>> rows;
    for (const auto& r : m.methods) rows.emplace_back(r.summary.method, r.abstention);
    eval::write_abstention(root / "table4" / "table4.csv", rows);
  }
  if (all || target == "table6") {
    const auto& m = need_main();
    std::vector<eval::SizeRow> rows;
    for (const auto& r : m.methods) rows.push_back(r.summary);
    eval::write_accuracy_vs_size(root / "table6" / "table6.csv", rows);
  }
  if (all || target == "figure6") {
    const auto& m = need_main();
    const auto& first = m.methods.front();
    eval::write_confusion(root / "figure6" / "confusion.csv", first.confusion, m.label_names);
    eval::write_class_stats(root / "figure6" / "per_class_stats.csv", first.confusion, m.label_names);
    if (cfg.eval.svg) eval::write_confusion_svg(root / "figure6" / "confusion.svg", first.confusion, m.label_names);
  }
  if (all || target == "figure7") {
    const auto& m = need_main();
    for (const auto& r : m.methods)
      eval::write_accuracy_vs_dnmed(root / "figure7" / ("accuracy_vs_dnmed_" + r.summary.method + ".csv"), r.dnmed_bins);
    std::ofstream os(root / "figure7" / "spearman.csv", std::ios::binary);
    os << "method,spearman\n";
    for (const auto& r : m.methods) os << r.summary.method << ',' << eval::detail::fmt(r.dnmed_spearman) << '\n';
  }

  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    const auto rel = fs::relative(e.path(), root);
    if (*rel.begin() == "cache") continue;
    res.csv_files.push_back(rel);
  }
  std::sort(res.csv_files.begin(), res.csv_files.end());
  return res;
}

}  // namespace spectranet::runner
