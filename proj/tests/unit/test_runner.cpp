#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "spectranet/runner/reproduce.hpp"

using namespace spectranet;
using namespace spectranet::runner;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh(const std::string& name) {
  auto p = fs::temp_directory_path() / ("spectranet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json tiny_config() {
  return json::parse(R"({
    "name": "tiny",
    "seed": 5,
    "dataset": { "n_classes": 2, "examples_per_class": 50, "dnmed_range": [400, 1000], "policy": "nadir",
                 "instrument": { "read_noise_sigma": 0, "shot_noise": false } },
    "backbone": { "stage_widths": [4, 8], "blocks_per_stage": [1, 1] },
    "training": { "epochs": 30, "batch_size": 16 },
    "marginalization": { "methods": ["point", "swa"], "n_models": 1 },
    "eval": { "k": [1], "heldout_per_class": 25, "svg": false }
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SPECTRANET_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(Config, DefaultsAndProvenance) {
  const auto c = config_from_json(json::object());
  EXPECT_EQ(c.training.epochs, 60u);
  EXPECT_EQ(c.training.swa_epochs(), 12u);
  EXPECT_EQ(c.marginalization.dropout_samples, 100u);
  EXPECT_EQ(c.eval.ece_bins, 15u);
  EXPECT_EQ(c.eval.temperature_grid.size(), 200u);
  const auto r = resolved_json(c);
  EXPECT_TRUE(r.contains("dataset"));
  EXPECT_TRUE(r.contains("training"));
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(config_from_json(json{{"nmae", "x"}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"training", {{"epoch", 3}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"materials", {{"depth", 1}}}}}}), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(config_from_json(json{{"dataset", {{"examples_per_class", 300}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sweep", {{"examples_per_class", {50, 75}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"n_classes", 2}}}, {"eval", {{"k", {5}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"dnmed_range", {500, 100}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"dataset", {{"policy", "tumbling"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"training", {{"epochs", "many"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"marginalization", {{"methods", {"laplace"}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"eval", {{"thresholds", {1.5}}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, TemperatureGridRange) {
  const auto c = config_from_json(json{{"eval", {{"temperature_grid", {{"min", 0.5}, {"max", 2.0}, {"step", 0.5}}}}}});
  EXPECT_EQ(c.eval.temperature_grid, (std::vector<double>{0.5, 1.0, 1.5, 2.0}));
}

TEST(Pipeline, MissingUpstreamArtifactNamesStage) {
  Pipeline p(config_from_json(tiny_config()), fresh("missing"));
  try {
    p.curate();
    FAIL() << "expected MissingArtifactError";
  } catch (const MissingArtifactError& e) {
    EXPECT_NE(std::string(e.what()).find("simulate"), std::string::npos);
    EXPECT_EQ(e.exit_code(), ExitCode::missing_artifact);
  }
  EXPECT_THROW(p.train(), MissingArtifactError);
  EXPECT_THROW(p.evaluate(fresh("missing_report")), MissingArtifactError);
}

TEST(Pipeline, SeparableTwoClassReachesNinetyFive) {
  const auto root = fresh("separable");
  Pipeline p(config_from_json(tiny_config()), root);
  const auto s = p.run_all(root / "report");
  EXPECT_GE(s.at(bayes::PredictiveSource::point).summary.top(1), 0.95);
  for (const char* f : {"accuracy_vs_size.csv", "abstention.csv", "config.json", "run_manifest.json",
                        "point/reliability.csv", "point/confusion.csv", "point/per_class_stats.csv",
                        "point/accuracy_vs_dnmed.csv", "swa/reliability.csv"})
    EXPECT_TRUE(fs::exists(root / "report" / f)) << f;

  // Completed stages are skipped and say so.
  Pipeline again(config_from_json(tiny_config()), root);
  ::testing::internal::CaptureStderr();
  again.simulate();
  again.curate();
  again.train();
  const auto log = ::testing::internal::GetCapturedStderr();
  EXPECT_NE(log.find("cached"), std::string::npos);
  for (const auto& st : again.stages()) EXPECT_TRUE(st.cached) << st.name;
  const auto s2 = again.evaluate(root / "report2");
  EXPECT_EQ(slurp(root / "report" / "accuracy_vs_size.csv"), slurp(root / "report2" / "accuracy_vs_size.csv"));
  EXPECT_EQ(slurp(root / "report" / "point" / "reliability.csv"), slurp(root / "report2" / "point" / "reliability.csv"));
}

TEST(Pipeline, FreshRootsGiveByteIdenticalCsvs) {
  auto j = tiny_config();
  j["dataset"]["examples_per_class"] = 50;
  j["marginalization"] = {{"methods", {"point", "dropout", "swag"}}, {"n_models", 1},
                          {"dropout_samples", 4}, {"swag_samples", 2}, {"swag_rank", 3}};
  j["training"]["epochs"] = 6;
  const auto a = fresh("det_a"), b = fresh("det_b");
  const auto ra = reproduce(config_from_json(j), a, "table6");
  const auto rb = reproduce(config_from_json(j), b, "table6");
  ASSERT_EQ(ra.csv_files, rb.csv_files);
  ASSERT_FALSE(ra.csv_files.empty());
  for (const auto& f : ra.csv_files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Reproduce, UnknownTargetRejected) {
  EXPECT_THROW(reproduce(config_from_json(tiny_config()), fresh("target"), "table9"), ConfigError);
}

TEST(Cli, ExitCodes) {
  const auto dir = fresh("cli");
  const auto cfg = write_config(dir, tiny_config());
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train"), 2);  // --config is required
  EXPECT_EQ(run_cli("train --config " + (dir / "absent.json").string()), 2);
  auto bad = tiny_config();
  bad["training"]["epohcs"] = 3;
  const auto bad_dir = dir / "bad";
  fs::create_directories(bad_dir);
  EXPECT_EQ(run_cli("simulate --config " + write_config(bad_dir, bad).string()), 2);
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --out " + (dir / "run").string()), 3);
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "run").string()), 3);
  EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + (dir / "run").string()), 0);
  EXPECT_EQ(run_cli("curate --config " + cfg.string() + " --out " + (dir / "run").string()), 0);
  EXPECT_EQ(run_cli("reproduce table5 --config " + cfg.string() + " --out " + (dir / "run").string()), 2);

  auto diverge = tiny_config();
  diverge["training"]["lr"] = 1e30;
  diverge["training"]["swa_lr"] = 1e30;
  const auto div_dir = dir / "div";
  fs::create_directories(div_dir);
  EXPECT_EQ(run_cli("train --config " + write_config(div_dir, diverge).string() + " --out " + (dir / "run").string()), 4);
}
