#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/autodiff/checkpoint.hpp"
#include "spectranet/bayes/ensemble.hpp"
#include "spectranet/bayes/swa.hpp"
#include "spectranet/core/hash.hpp"
#include "spectranet/core/log.hpp"
#include "spectranet/core/parallel.hpp"
#include "spectranet/eval/metrics.hpp"
#include "spectranet/eval/records.hpp"
#include "spectranet/eval/report.hpp"
#include "spectranet/metrics/curate.hpp"
#include "spectranet/model/labeled_set.hpp"
#include "spectranet/runner/config.hpp"
#include "spectranet/runner/trainer.hpp"
#include "spectranet/sim/dataset.hpp"

namespace spectranet::runner {

namespace fs = std::filesystem;

/// Bumped whenever an artifact format or the numerics behind it change, so old
/// cache entries are not reused.
inline constexpr const char* kArtifactVersion = "2";

inline std::string content_key(const json& j) { return hex64(fnv1a64(j.dump())); }

inline json to_json(const sim::InstrumentModel& m) {
  return {{"frame_height", m.frame_height},       {"frame_width", m.frame_width},
          {"dispersion_lambda0", m.dispersion_lambda0}, {"dispersion_column0", m.dispersion_column0},
          {"columns_per_nm", m.columns_per_nm},   {"psf_sigma", m.psf_sigma},
          {"trace_row", m.trace_row},             {"bias_level", m.bias_level},
          {"read_noise_sigma", m.read_noise_sigma}, {"background_level", m.background_level},
          {"background_gradient", m.background_gradient}, {"gain", m.gain},
          {"shot_noise", m.shot_noise},           {"psf_window_sigmas", m.psf_window_sigmas},
          {"hot_pixel_rate", m.hot_pixel_rate},   {"hot_pixel_value", m.hot_pixel_value},
          {"cosmic_rays_per_frame", m.cosmic_rays_per_frame}, {"cosmic_ray_value", m.cosmic_ray_value}};
}

/// Everything that determines the rendered frames (worker count excluded).
inline json dataset_json(const sim::DatasetConfig& d) {
  json classes = json::array();
  for (const auto& c : d.resolve_classes()) classes.push_back(sim::to_json(c));
  return {{"version", kArtifactVersion},
          {"grid", sim::to_json(d.grid)},
          {"instrument", to_json(d.instrument)},
          {"classes", classes},
          {"examples_per_class", d.examples_per_class},
          {"policy", sim::to_string(d.policy)},
          {"jitter_deg", d.jitter_deg},
          {"nadir_reference", {d.nadir_reference.theta, d.nadir_reference.phi}},
          {"dnmed", {d.dnmed_min, d.dnmed_max}},
          {"flats", {d.include_flats, d.n_flats}},
          {"airmass", {d.airmass_min, d.airmass_max}},
          {"pwv", {d.pwv_min_mm, d.pwv_max_mm}},
          {"solar_temperature_k", d.solar_temperature_k},
          {"dnmed_poly_degree", d.dnmed_poly_degree},
          {"split", {d.split.fractions, d.split.seed, d.split.stratified}},
          {"seed", d.seed},
          {"frame_stream", d.frame_stream}};
}

inline json training_json(const TrainingConfig& t) {
  return {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"lr", t.lr},
          {"swa_lr", t.swa_lr}, {"momentum", t.momentum},     {"weight_decay", t.weight_decay},
          {"swa_fraction", t.swa_fraction}, {"seed", t.seed}};
}

inline json eval_json(const EvalConfig& e) {
  return {{"k", e.k},
          {"ece_bins", e.ece_bins},
          {"temperature_grid", e.temperature_grid},
          {"thresholds", e.thresholds},
          {"dnmed_edges", e.dnmed_edges},
          {"tempering", e.tempering == eval::TemperPoint::member ? "member" : "post_ensemble"},
          {"heldout_per_class", e.heldout_per_class}};
}

/// The fully resolved configuration, written next to every report.
inline json resolved_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.marginalization.methods) methods.push_back(bayes::to_string(m));
  return {{"name", c.name},
          {"seed", c.seed},
          {"dataset", dataset_json(c.dataset)},
          {"curation_threshold", c.curation_threshold},
          {"backbone", model::to_json(c.backbone)},
          {"training", training_json(c.training)},
          {"marginalization",
           {{"methods", methods},
            {"n_models", c.marginalization.n_models},
            {"dropout_samples", c.marginalization.dropout_samples},
            {"swag_rank", c.marginalization.swag_rank},
            {"swag_scale", c.marginalization.swag_scale},
            {"swag_samples", c.marginalization.swag_samples}}},
          {"eval", eval_json(c.eval)}};
}

namespace detail {

inline bool stamped(const fs::path& dir, const std::string& key) {
  std::ifstream is(dir / "stamp.json");
  if (!is) return false;
  try {
    return json::parse(is).value("key", "") == key;
  } catch (const json::exception&) {
    return false;
  }
}

inline void write_stamp(const fs::path& dir, const std::string& key, const std::string& stage) {
  std::ofstream os(dir / "stamp.json");
  os << json{{"key", key}, {"stage", stage}}.dump() << '\n';
}

inline void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write '" + p.string() + "'");
  os << j.dump(2) << '\n';
}

}  // namespace detail

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  bool cached = false;
  std::string key;
};

struct MethodResult {
  bayes::PredictiveSource method = bayes::PredictiveSource::point;
  std::vector<eval::EvalRecord> records;
  eval::SizeRow summary;
  eval::CalibrationReport calibration;
  eval::ConfusionMatrix confusion;
  std::vector<eval::DnmedBin> dnmed_bins;
  std::optional<double> dnmed_spearman;
  std::vector<eval::AbstainResult> abstention;  // threshold 0 first
};

struct EvalSummary {
  std::vector<std::string> label_names;
  std::vector<MethodResult> methods;

  [[nodiscard]] const MethodResult& at(bayes::PredictiveSource s) const {
    for (const auto& m : methods)
      if (m.method == s) return m;
    throw ConfigError("method '" + bayes::to_string(s) + "' was not evaluated");
  }
};

/// One experiment: stage artifacts live in a content-addressed cache under
/// `root/cache`, so identical stage inputs are computed once and shared.
class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, fs::path root) : cfg_(std::move(cfg)), root_(std::move(root)) {}

  [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<StageRecord>& stages() const { return stages_; }
  [[nodiscard]] fs::path cache_dir() const { return root_ / "cache"; }

  [[nodiscard]] std::vector<std::string> label_names() const {
    std::vector<std::string> out;
    for (const auto& c : cfg_.dataset.resolve_classes()) out.push_back(c.class_id);
    if (cfg_.dataset.include_flats) out.push_back(sim::kFlatClassId);
    return out;
  }

  // ---- keys ---------------------------------------------------------------
  [[nodiscard]] std::string dataset_key() const { return content_key(dataset_json(cfg_.dataset)); }
  [[nodiscard]] sim::DatasetConfig heldout_config() const {
    sim::DatasetConfig d = cfg_.dataset;
    d.examples_per_class = cfg_.eval.heldout_per_class;
    d.n_flats = cfg_.dataset.include_flats ? cfg_.eval.heldout_per_class : 0;
    d.frame_stream = stream::eval_frame;
    d.split.fractions = {0.0, 0.0, 1.0};
    return d;
  }
  [[nodiscard]] std::string heldout_key() const { return content_key(dataset_json(heldout_config())); }
  [[nodiscard]] std::string curation_key(const std::string& data_key) const {
    return content_key({{"data", data_key}, {"threshold", cfg_.curation_threshold}});
  }
  [[nodiscard]] std::string member_key(std::size_t k) const {
    return content_key({{"version", kArtifactVersion},
                        {"curated", curation_key(dataset_key())},
                        {"backbone", model::to_json(cfg_.backbone)},
                        {"training", training_json(cfg_.training)},
                        {"swag_rank", cfg_.marginalization.swag_rank},
                        {"member", k}});
  }

  [[nodiscard]] fs::path dataset_dir() const { return cache_dir() / ("data-" + dataset_key()); }
  [[nodiscard]] fs::path heldout_dir() const { return cache_dir() / ("data-" + heldout_key()); }
  [[nodiscard]] fs::path curated_manifest(const fs::path& data_dir, const std::string& data_key) const {
    return data_dir / ("curated-" + curation_key(data_key) + ".jsonl");
  }
  [[nodiscard]] fs::path member_dir(std::size_t k) const { return cache_dir() / ("model-" + member_key(k)); }

  // ---- stages -------------------------------------------------------------

  /// Renders the training dataset (and the held-out set when configured).
  void simulate() {
    timed("simulate", dataset_key(), [&] { return ensure_dataset(cfg_.dataset, dataset_dir(), dataset_key()); });
    if (cfg_.eval.heldout_per_class > 0)
      timed("simulate-heldout", heldout_key(), [&] { return ensure_dataset(heldout_config(), heldout_dir(), heldout_key()); });
  }

  void curate() {
    require(dataset_dir() / "stamp.json", "dataset", "simulate");
    timed("curate", curation_key(dataset_key()), [&] { return ensure_curated(dataset_dir(), dataset_key()); });
    if (cfg_.eval.heldout_per_class > 0) {
      require(heldout_dir() / "stamp.json", "held-out dataset", "simulate");
      timed("curate-heldout", curation_key(heldout_key()), [&] { return ensure_curated(heldout_dir(), heldout_key()); });
    }
  }

  /// Trains n_models members (in parallel when workers > 1).
  void train() {
    require(curated_manifest(dataset_dir(), dataset_key()), "curated manifest", "curate");
    const std::size_t n = cfg_.marginalization.n_models;
    std::vector<std::size_t> todo;
    for (std::size_t k = 0; k < n; ++k)
      if (detail::stamped(member_dir(k), member_key(k))) {
        log::info("stage train member " + std::to_string(k) + ": cached");
        stages_.push_back({"train-member-" + std::to_string(k), 0.0, true, member_key(k)});
      } else {
        todo.push_back(k);
      }
    if (todo.empty()) return;
    const auto t0 = std::chrono::steady_clock::now();
    const auto train_set = load_split(curated_manifest(dataset_dir(), dataset_key()), "train");
    log::info("training " + std::to_string(todo.size()) + " member(s) on " + std::to_string(train_set.size()) +
              " frames");
    parallel_for(todo.size(), cfg_.workers, [&](std::size_t i) { train_and_save(train_set, todo[i]); });
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (auto k : todo) stages_.push_back({"train-member-" + std::to_string(k), s, false, member_key(k)});
  }

  /// Scores every configured method on the evaluation set and writes reports
  /// into `report_dir`.
  EvalSummary evaluate(const fs::path& report_dir) {
    for (std::size_t k = 0; k < cfg_.marginalization.n_models; ++k)
      require(member_dir(k) / "stamp.json", "trained member " + std::to_string(k), "train");
    const auto t0 = std::chrono::steady_clock::now();
    const bool heldout = cfg_.eval.heldout_per_class > 0;
    const fs::path eval_manifest = heldout ? curated_manifest(heldout_dir(), heldout_key())
                                           : curated_manifest(dataset_dir(), dataset_key());
    require(eval_manifest, "evaluation manifest", "curate");
    const std::string eval_key = heldout ? curation_key(heldout_key()) : curation_key(dataset_key()) + "-test";

    EvalSummary summary;
    summary.label_names = label_names();
    const auto eval_set = load_split(eval_manifest, "test");
    if (eval_set.empty()) throw DataError("evaluation set is empty");
    for (auto method : cfg_.marginalization.methods) {
      auto preds = predictions(method, eval_set, eval_key);
      summary.methods.push_back(score(method, preds, eval_set));
    }
    write_reports(report_dir, summary);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages_.push_back({"eval", s, false, eval_key});
    write_run_manifest(report_dir);
    return summary;
  }

  /// simulate -> curate -> train -> eval.
  EvalSummary run_all(const fs::path& report_dir) {
    simulate();
    curate();
    train();
    return evaluate(report_dir);
  }

  /// Labeled frames of one split of a manifest, labels in label_names() order.
  [[nodiscard]] model::LabeledSet load_split(const fs::path& manifest_path, const std::string& split) const {
    const auto manifest = sim::read_manifest(manifest_path);
    const auto names = label_names();
    model::LabeledSet set;
    for (const auto& r : manifest.records) {
      if (r.split != split) continue;
      const auto it = std::find(names.begin(), names.end(), r.class_id);
      if (it == names.end()) throw DataError("manifest class '" + r.class_id + "' is not a configured label");
      set.add(sim::read_frame(manifest.frame_path(r)), static_cast<int>(it - names.begin()), r.measured_dnmed);
    }
    return set;
  }

 private:
  template <class F>
  void timed(const std::string& name, const std::string& key, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool cached = f();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages_.push_back({name, s, cached, key});
    if (cached) log::info("stage " + name + ": cached");
  }

  static void require(const fs::path& p, const std::string& what, const std::string& stage) {
    if (!fs::exists(p)) throw MissingArtifactError(what + " (" + p.string() + ")", stage);
  }

  static bool ensure_dataset(const sim::DatasetConfig& d, const fs::path& dir, const std::string& key) {
    if (detail::stamped(dir, key)) return true;
    fs::remove_all(dir);
    sim::generate_dataset(d, dir);
    detail::write_json(dir / "dataset_config.json", dataset_json(d));
    detail::write_stamp(dir, key, "simulate");
    return false;
  }

  bool ensure_curated(const fs::path& dir, const std::string& data_key) const {
    const fs::path out = curated_manifest(dir, data_key);
    if (fs::exists(out)) return true;
    const auto res = metrics::curate(sim::read_manifest(dir / "manifest.jsonl"), cfg_.curation_threshold);
    const fs::path tmp = out.string() + ".tmp";
    sim::write_manifest(tmp, res.manifest);
    fs::rename(tmp, out);
    return false;
  }

  void train_and_save(const model::LabeledSet& train_set, std::size_t k) const {
    const fs::path dir = member_dir(k);
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto res = train_member(cfg_, train_set, k);
    ad::save_checkpoint(dir / "final.spck", res.final_model.to_checkpoint());
    const auto swa = swa_model(res.final_model, res.swa, train_set, cfg_.eval.batch_size);
    ad::save_checkpoint(dir / "swa.spck", swa.to_checkpoint());
    ad::save_checkpoint(dir / "swag.spck", bayes::swag_to_checkpoint(res.swag, model::to_json(cfg_.backbone)));
    std::ofstream hist(dir / "history.csv");
    hist << "epoch,lr,loss,accuracy\n";
    for (const auto& h : res.history)
      hist << h.epoch << ',' << eval::detail::fmt(h.lr, 8) << ',' << eval::detail::fmt(h.loss) << ','
           << eval::detail::fmt(h.accuracy) << '\n';
    detail::write_stamp(dir, member_key(k), "train");
  }

  model::Model<float> load_model(std::size_t k, const char* file) const {
    return model::Model<float>::from_checkpoint(ad::load_checkpoint(member_dir(k) / file));
  }

  /// Member logits for every evaluation frame, cached on disk by content key.
  std::vector<bayes::PredictiveDistribution> predictions(bayes::PredictiveSource method,
                                                         const model::LabeledSet& eval_set,
                                                         const std::string& eval_key) {
    using bayes::PredictiveSource;
    const auto& mc = cfg_.marginalization;
    const bool multi = method == PredictiveSource::multi_swa || method == PredictiveSource::multi_swag;
    const std::size_t n_models = multi ? mc.n_models : 1;
    json key_doc{{"method", bayes::to_string(method)}, {"eval", eval_key}, {"version", kArtifactVersion}};
    for (std::size_t k = 0; k < n_models; ++k) key_doc["members"].push_back(member_key(k));
    if (method == PredictiveSource::dropout) key_doc["samples"] = mc.dropout_samples;
    if (method == PredictiveSource::swag || method == PredictiveSource::multi_swag)
      key_doc["swag"] = {mc.swag_samples, mc.swag_scale};
    const std::string key = content_key(key_doc);
    const fs::path path = cache_dir() / ("pred-" + key + ".json");

    if (!fs::exists(path)) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t bs = cfg_.eval.batch_size;
      std::vector<std::vector<bayes::PredictiveDistribution>> parts(n_models);
      std::optional<model::LabeledSet> train_set;
      if (method == PredictiveSource::swag || method == PredictiveSource::multi_swag)
        train_set = load_split(curated_manifest(dataset_dir(), dataset_key()), "train");
      parallel_for(n_models, cfg_.workers, [&](std::size_t k) {
        switch (method) {
          case PredictiveSource::point: {
            auto m = load_model(k, "final.spck");
            model::Model<float>* ms[] = {&m};
            parts[k] = bayes::ensemble_predict<float>(ms, eval_set, method, bs);
            break;
          }
          case PredictiveSource::dropout: {
            auto m = load_model(k, "final.spck");
            parts[k] = bayes::mc_dropout_predict(m, eval_set, mc.dropout_samples,
                                                 derive_seed(cfg_.training.seed, stream::dropout, 1'000'000 + k), bs);
            break;
          }
          case PredictiveSource::swa:
          case PredictiveSource::multi_swa: {
            auto m = load_model(k, "swa.spck");
            model::Model<float>* ms[] = {&m};
            parts[k] = bayes::ensemble_predict<float>(ms, eval_set, method, bs);
            break;
          }
          case PredictiveSource::swag:
          case PredictiveSource::multi_swag: {
            const auto state = bayes::swag_from_checkpoint(ad::load_checkpoint(member_dir(k) / "swag.spck"));
            const auto base = load_model(k, "final.spck");
            parts[k] = bayes::swag_predict(state, base, *train_set, eval_set, mc.swag_samples, mc.swag_scale,
                                           derive_seed(cfg_.training.seed, stream::swag, k), bs);
            break;
          }
        }
      });
      const auto combined = bayes::combine(parts, method);
      json doc{{"key", key}, {"method", bayes::to_string(method)}, {"logits", json::array()}};
      for (const auto& d : combined) doc["logits"].push_back(d.member_logits);
      const fs::path tmp = path.string() + ".tmp";
      {
        std::ofstream os(tmp, std::ios::binary);
        os << doc.dump() << '\n';
        if (!os) throw DataError("cannot write '" + tmp.string() + "'");
      }
      fs::rename(tmp, path);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      stages_.push_back({"predict-" + bayes::to_string(method), s, false, key});
    } else {
      log::info("stage predict " + bayes::to_string(method) + ": cached");
      stages_.push_back({"predict-" + bayes::to_string(method), 0.0, true, key});
    }

    // Always score from the stored logits so fresh and cached runs agree bit for bit.
    std::ifstream is(path, std::ios::binary);
    const json doc = json::parse(is);
    const auto& logits = doc.at("logits");
    if (logits.size() != eval_set.size()) throw DataError("cached predictions do not match the evaluation set");
    std::vector<bayes::PredictiveDistribution> out(logits.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].source = method;
      for (const auto& l : logits[i]) out[i].add_logits(l.get<std::vector<double>>());
    }
    return out;
  }

  MethodResult score(bayes::PredictiveSource method, const std::vector<bayes::PredictiveDistribution>& preds,
                     const model::LabeledSet& eval_set) const {
    const auto& e = cfg_.eval;
    MethodResult r;
    r.method = method;
    for (std::size_t i = 0; i < preds.size(); ++i)
      r.records.push_back(eval::record_from_distribution(eval_set.labels[i], preds[i], eval_set.dnmed[i]));
    r.summary.examples_per_class = cfg_.dataset.examples_per_class;
    r.summary.policy = sim::to_string(cfg_.dataset.policy);
    r.summary.method = bayes::to_string(method);
    for (auto k : e.k) r.summary.top_k.emplace_back(k, eval::top_k_accuracy(r.records, k));
    r.calibration = eval::calibration_report(r.records, e.ece_bins, e.temperature_grid, e.tempering);
    r.summary.ece = r.calibration.ece;
    r.summary.best_T = *r.calibration.best_T;
    r.summary.ece_at_best_T = *r.calibration.ece_at_best_T;
    r.confusion = eval::confusion_matrix(r.records, label_names().size());
    r.dnmed_bins = eval::accuracy_by_dnmed(r.records, e.dnmed_edges);
    r.dnmed_spearman = eval::dnmed_trend(r.dnmed_bins);
    r.abstention.push_back(eval::threshold_abstain(r.records, 0.0));
    for (double t : e.thresholds) r.abstention.push_back(eval::threshold_abstain(r.records, t));
    return r;
  }

  void write_reports(const fs::path& dir, const EvalSummary& s) const {
    fs::create_directories(dir);
    std::vector<eval::SizeRow> rows;
    std::vector<std::pair<std::string, std::vector<eval::AbstainResult>>> abst;
    for (const auto& m : s.methods) {
      rows.push_back(m.summary);
      abst.emplace_back(m.summary.method, m.abstention);
      const fs::path md = dir / m.summary.method;
      eval::write_reliability(md / "reliability.csv", m.calibration);
      eval::write_confusion(md / "confusion.csv", m.confusion, s.label_names);
      eval::write_class_stats(md / "per_class_stats.csv", m.confusion, s.label_names);
      eval::write_accuracy_vs_dnmed(md / "accuracy_vs_dnmed.csv", m.dnmed_bins);
      if (cfg_.eval.svg) {
        eval::write_reliability_svg(md / "reliability.svg", m.calibration, m.summary.method);
        eval::write_confusion_svg(md / "confusion.svg", m.confusion, s.label_names);
      }
    }
    eval::write_accuracy_vs_size(dir / "accuracy_vs_size.csv", rows);
    eval::write_abstention(dir / "abstention.csv", abst);
    detail::write_json(dir / "config.json", resolved_json(cfg_));
  }

  void write_run_manifest(const fs::path& dir) const {
    json stages = json::array();
    for (const auto& st : stages_)
      stages.push_back({{"stage", st.name}, {"seconds", st.seconds}, {"cached", st.cached}, {"key", st.key}});
    json members = json::array();
    for (std::size_t k = 0; k < cfg_.marginalization.n_models; ++k) members.push_back(member_dir(k).string());
    const std::string hash = content_key(resolved_json(cfg_));
    detail::write_json(dir / "run_manifest.json",
                       {{"run_id", cfg_.name + "-" + hash},
                        {"config_hash", hash},
                        {"artifacts",
                         {{"dataset_manifest", (dataset_dir() / "manifest.jsonl").string()},
                          {"curated_manifest", curated_manifest(dataset_dir(), dataset_key()).string()},
                          {"members", members}}},
                        {"stages", stages}});
  }

  ExperimentConfig cfg_;
  fs::path root_;
  std::vector<StageRecord> stages_;
};

}  // namespace spectranet::runner
