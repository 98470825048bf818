// spectranet command line: pipeline stages, reproduction targets and the
// standalone frame metrics.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spectranet/core/error.hpp"
#include "spectranet/core/log.hpp"
#include "spectranet/metrics/curate.hpp"
#include "spectranet/metrics/dnmed.hpp"
#include "spectranet/metrics/split.hpp"
#include "spectranet/runner/config.hpp"
#include "spectranet/runner/pipeline.hpp"
#include "spectranet/runner/reproduce.hpp"
#include "spectranet/sim/frame.hpp"
#include "spectranet/sim/manifest.hpp"

namespace fs = std::filesystem;
using namespace spectranet;

namespace {

struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool deterministic = false;
};

runner::ExperimentConfig load(const RunOptions& o) {
  std::ifstream is(o.config);
  if (!is) throw ConfigError("cannot open config '" + o.config + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(o.config + ": " + e.what());
  }
  if (o.seed) j["seed"] = *o.seed;
  if (o.workers) j["workers"] = *o.workers;
  if (o.deterministic) {
    j["workers"] = 1;
    j["deterministic"] = true;
  }
  return runner::config_from_json(j, fs::path(o.config).parent_path());
}

fs::path out_root(const RunOptions& o, const runner::ExperimentConfig& c) {
  return o.out.empty() ? fs::path("runs") / c.name : fs::path(o.out);
}

void add_run_options(CLI::App* sub, RunOptions& o) {
  sub->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output root (default runs/<name>)");
  sub->add_option("--seed", o.seed, "override the master seed");
  sub->add_option("--workers", o.workers, "worker threads");
  sub->add_flag("--deterministic", o.deterministic, "serial execution");
}

void print_summary(const runner::EvalSummary& s) {
  for (const auto& m : s.methods) {
    std::printf("%-11s", m.summary.method.c_str());
    for (const auto& [k, v] : m.summary.top_k) std::printf("  top%zu %.4f", k, v);
    std::printf("  ece %.4f  best_T %.2f  ece@T %.4f\n", m.summary.ece, m.summary.best_T, m.summary.ece_at_best_T);
  }
}

int dnmed_command(const std::string& path, int degree, const std::string& axis) {
  metrics::DnMedOptions opt;
  opt.poly_degree = degree;
  opt.axis = metrics::parse_axis(axis);
  if (path.size() >= 6 && path.ends_with(".jsonl")) {
    const auto m = sim::read_manifest(path);
    for (const auto& r : m.records) {
      const auto rep = metrics::dn_med(sim::read_frame(m.frame_path(r)), opt);
      std::cout << nlohmann::json{{"path", r.path}, {"class_id", r.class_id}, {"dnmed", rep.dnmed}}.dump() << '\n';
    }
  } else {
    const auto rep = metrics::dn_med(sim::read_frame(path), opt);
    std::cout << nlohmann::json{{"path", path},
                                {"dnmed", rep.dnmed},
                                {"trace_row", rep.trace_row},
                                {"window", {rep.window_lo, rep.window_hi}},
                                {"poly_degree", rep.poly_degree}}
                     .dump()
              << '\n';
  }
  return 0;
}

void emit_manifest(const sim::Manifest& m, const std::string& out) {
  if (out.empty()) {
    for (const auto& r : m.records) std::cout << sim::to_json(r).dump() << '\n';
  } else {
    sim::write_manifest(out, m);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectranet: synthetic spectroscopic satellite identification"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "debug|info|warn|error|quiet");

  RunOptions ro;
  std::string target;
  auto* sim_cmd = app.add_subcommand("simulate", "render the dataset frames");
  auto* cur_cmd = app.add_subcommand("curate", "apply the DN_med cut");
  auto* train_cmd = app.add_subcommand("train", "train the model(s)");
  auto* eval_cmd = app.add_subcommand("eval", "score predictions and write reports");
  auto* rep_cmd = app.add_subcommand("reproduce", "run a reproduction target");
  for (auto* s : {sim_cmd, cur_cmd, train_cmd, eval_cmd, rep_cmd}) add_run_options(s, ro);
  rep_cmd->add_option("target", target, "table2|table4|table6|figure4|figure6|figure7|all")
      ->required()
      ->check(CLI::IsMember(runner::reproduce_targets()));

  auto* met = app.add_subcommand("metrics", "frame metrics utilities");
  met->require_subcommand(1);
  std::string input, out, fractions = "0.8,0.1,0.1", axis = "along_dispersion";
  int degree = 2;
  double threshold = 0.0;
  std::uint64_t split_seed = 0;
  auto* dn = met->add_subcommand("dnmed", "DN_med of a frame or every frame of a manifest");
  dn->add_option("input", input, "frame (.spfr) or manifest (.jsonl)")->required()->check(CLI::ExistingFile);
  dn->add_option("--poly-degree", degree, "background polynomial degree");
  dn->add_option("--axis", axis, "along_dispersion|across_dispersion");
  auto* mc = met->add_subcommand("curate", "drop frames at or below a DN_med threshold");
  mc->add_option("input", input, "manifest (.jsonl)")->required()->check(CLI::ExistingFile);
  mc->add_option("--threshold", threshold, "DN_med cut")->required();
  mc->add_option("--out", out, "output manifest (default stdout)");
  auto* ms = met->add_subcommand("split", "stratified train/val/test assignment");
  ms->add_option("input", input, "manifest (.jsonl)")->required()->check(CLI::ExistingFile);
  ms->add_option("--seed", split_seed, "split seed");
  ms->add_option("--fractions", fractions, "train,val,test");
  ms->add_option("--out", out, "output manifest (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    log::set_threshold(log::parse_level(level));
    if (dn->parsed()) return dnmed_command(input, degree, axis);
    if (mc->parsed()) {
      const auto res = metrics::curate(sim::read_manifest(input), threshold);
      emit_manifest(res.manifest, out);
      std::cerr << "class,before,after\n";
      for (const auto& [cls, counts] : res.per_class) std::cerr << cls << ',' << counts.first << ',' << counts.second << '\n';
      return 0;
    }
    if (ms->parsed()) {
      metrics::SplitAssignment a;
      a.seed = split_seed;
      a.fractions = metrics::parse_fractions(fractions);
      const auto m = metrics::split(sim::read_manifest(input), a);
      emit_manifest(m, out);
      std::cerr << "class,train,val,test\n";
      std::map<std::string, std::array<std::size_t, 3>> counts;
      for (const auto& r : m.records)
        for (std::size_t s = 0; s < 3; ++s)
          if (r.split == metrics::kSplitNames[s]) ++counts[r.class_id][s];
      for (const auto& [cls, c] : counts) std::cerr << cls << ',' << c[0] << ',' << c[1] << ',' << c[2] << '\n';
      return 0;
    }

    const auto cfg = load(ro);
    const fs::path root = out_root(ro, cfg);
    runner::Pipeline p(cfg, root);
    if (sim_cmd->parsed()) p.simulate();
    else if (cur_cmd->parsed()) p.curate();
    else if (train_cmd->parsed()) p.train();
    else if (eval_cmd->parsed()) print_summary(p.evaluate(root / "eval"));
    else if (rep_cmd->parsed()) {
      const auto res = runner::reproduce(cfg, root, target);
      if (res.main) print_summary(*res.main);
      if (res.sweep)
        for (const auto& r : res.sweep->rows)
          std::printf("%-7s %5zu  top1 %.4f\n", r.policy.c_str(), r.examples_per_class, r.top(1));
      for (const auto& f : res.csv_files) std::printf("wrote %s\n", (root / f).string().c_str());
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "spectranet: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "spectranet: unexpected failure: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  }
}
