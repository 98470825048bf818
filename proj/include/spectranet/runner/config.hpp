#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/autodiff/optimizer.hpp"
#include "spectranet/bayes/predictive.hpp"
#include "spectranet/core/error.hpp"
#include "spectranet/core/hash.hpp"
#include "spectranet/eval/metrics.hpp"
#include "spectranet/model/backbone.hpp"
#include "spectranet/sim/dataset.hpp"

namespace spectranet::runner {

using nlohmann::json;

struct TrainingConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double swa_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Fraction of final epochs during which the lr is held at swa_lr and one
  /// SWA/SWAG checkpoint is collected per epoch (at least 2 when possible, the
  /// minimum for a SWAG covariance).
  double swa_fraction = 0.2;
  std::uint64_t seed = 1;

  [[nodiscard]] std::size_t swa_epochs() const {
    if (swa_fraction <= 0.0) return 0;
    const auto k = static_cast<std::size_t>(std::lround(swa_fraction * static_cast<double>(epochs)));
    return std::clamp<std::size_t>(k, std::min<std::size_t>(2, epochs), epochs);
  }
  void validate() const {
    if (epochs < 1) throw ConfigError("training.epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("training.batch_size must be >= 2");
    if (!(lr > 0.0) || !(swa_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("training.momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("training.weight_decay must be >= 0");
    if (!(swa_fraction >= 0.0 && swa_fraction <= 1.0)) throw ConfigError("training.swa_fraction must be in [0, 1]");
  }
};

struct MarginalizationConfig {
  std::vector<bayes::PredictiveSource> methods{bayes::PredictiveSource::point};
  std::size_t n_models = 1;
  std::size_t dropout_samples = 100;
  std::size_t swag_rank = 20;
  double swag_scale = 0.25;
  std::size_t swag_samples = 20;

  [[nodiscard]] bool uses(bayes::PredictiveSource s) const {
    return std::find(methods.begin(), methods.end(), s) != methods.end();
  }
  void validate() const {
    if (methods.empty()) throw ConfigError("marginalization.methods is empty");
    if (n_models < 1) throw ConfigError("marginalization.n_models must be >= 1");
    if ((uses(bayes::PredictiveSource::multi_swa) || uses(bayes::PredictiveSource::multi_swag)) && n_models < 2)
      log::warn("multi-model marginalization with n_models = 1 reduces to a single model");
    if (dropout_samples < 1) throw ConfigError("marginalization.dropout_samples must be >= 1");
    if (swag_rank < 1) throw ConfigError("marginalization.swag_rank must be >= 1");
    if (!(swag_scale >= 0.0)) throw ConfigError("marginalization.swag_scale must be >= 0");
    if (swag_samples < 1) throw ConfigError("marginalization.swag_samples must be >= 1");
  }
};

struct EvalConfig {
  std::vector<std::size_t> k{1, 3};
  std::size_t ece_bins = 15;
  std::vector<double> temperature_grid = eval::default_temperature_grid();
  std::vector<double> thresholds{0.4, 0.6, 0.8};
  std::vector<double> dnmed_edges{50, 200, 400, 700, 1000};
  eval::TemperPoint tempering = eval::TemperPoint::member;
  /// Frames per class in an independently seeded held-out set; 0 evaluates on
  /// the dataset's test split instead.
  std::size_t heldout_per_class = 0;
  std::size_t batch_size = 64;
  bool svg = true;

  void validate() const {
    if (k.empty()) throw ConfigError("eval.k is empty");
    for (auto v : k)
      if (v < 1) throw ConfigError("eval.k entries must be >= 1");
    if (ece_bins < 1) throw ConfigError("eval.ece_bins must be >= 1");
    if (temperature_grid.empty()) throw ConfigError("eval.temperature_grid is empty");
    for (double t : temperature_grid)
      if (!(t > 0.0)) throw ConfigError("temperatures must be > 0");
    for (double t : thresholds)
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must lie in [0, 1]");
    if (dnmed_edges.size() < 2) throw ConfigError("eval.dnmed_edges needs at least two edges");
    for (std::size_t i = 1; i < dnmed_edges.size(); ++i)
      if (!(dnmed_edges[i] > dnmed_edges[i - 1])) throw ConfigError("eval.dnmed_edges must increase");
  }
};

struct SweepConfig {
  std::vector<std::size_t> examples_per_class{50, 100, 200, 500, 1000};
  std::vector<sim::OrientationPolicy> policies{sim::OrientationPolicy::nadir, sim::OrientationPolicy::random};
};

inline const std::set<std::size_t>& allowed_sizes() {
  static const std::set<std::size_t> s{50, 100, 200, 500, 1000};
  return s;
}

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool deterministic = true;
  sim::DatasetConfig dataset;
  std::string instrument_preset = "desk";
  double curation_threshold = 0.0;
  model::BackboneConfig backbone;
  TrainingConfig training;
  MarginalizationConfig marginalization;
  EvalConfig eval;
  SweepConfig sweep;
  json source = json::object();  // as given, for provenance

  void validate() const {
    dataset.validate();
    if (!allowed_sizes().contains(dataset.examples_per_class))
      throw ConfigError("dataset.examples_per_class must be one of 50, 100, 200, 500, 1000");
    for (auto s : sweep.examples_per_class)
      if (!allowed_sizes().contains(s)) throw ConfigError("sweep sizes must be drawn from 50, 100, 200, 500, 1000");
    if (sweep.policies.empty()) throw ConfigError("sweep.policies is empty");
    if (curation_threshold < 0.0) throw ConfigError("curation_threshold must be >= 0");
    backbone.validate();
    if (backbone.input_height != static_cast<int>(dataset.instrument.frame_height) ||
        backbone.input_width != static_cast<int>(dataset.instrument.frame_width))
      throw ConfigError("backbone input shape does not match the instrument frame");
    training.validate();
    marginalization.validate();
    eval.validate();
    const std::size_t labels = dataset.resolve_classes().size() + (dataset.include_flats ? 1 : 0);
    if (static_cast<std::size_t>(backbone.n_classes) != labels)
      throw ConfigError("backbone.n_classes (" + std::to_string(backbone.n_classes) + ") must equal the label count (" +
                        std::to_string(labels) + ")");
    for (auto kk : eval.k)
      if (kk > labels) throw ConfigError("eval.k entries must not exceed the label count");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in '" + section + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad type for '" + section + "." + key + "'");
  }
}

inline void read_range(const json& j, const char* key, double& lo, double& hi, const std::string& section) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError("'" + section + "." + key + "' must be [min, max]");
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

inline sim::InstrumentModel instrument_from_json(const json& j, const sim::WavelengthGrid& grid, std::string& preset) {
  sim::InstrumentModel m = sim::InstrumentModel::desk(grid);
  if (j.is_string()) {
    preset = j.get<std::string>();
    if (preset == "desk") return sim::InstrumentModel::desk(grid);
    if (preset == "paper") return sim::InstrumentModel::paper(grid);
    throw ConfigError("unknown instrument preset '" + preset + "' (desk|paper)");
  }
  const std::string s = "dataset.instrument";
  check_keys(j, s, {"preset", "psf_sigma", "bias_level", "read_noise_sigma", "background_level", "background_gradient",
                    "gain", "shot_noise", "hot_pixel_rate", "hot_pixel_value", "cosmic_rays_per_frame",
                    "cosmic_ray_value"});
  read(j, "preset", preset, s);
  if (preset == "paper") m = sim::InstrumentModel::paper(grid);
  else if (preset != "desk") throw ConfigError("unknown instrument preset '" + preset + "' (desk|paper)");
  read(j, "psf_sigma", m.psf_sigma, s);
  read(j, "bias_level", m.bias_level, s);
  read(j, "read_noise_sigma", m.read_noise_sigma, s);
  read(j, "background_level", m.background_level, s);
  read(j, "background_gradient", m.background_gradient, s);
  read(j, "gain", m.gain, s);
  read(j, "shot_noise", m.shot_noise, s);
  read(j, "hot_pixel_rate", m.hot_pixel_rate, s);
  read(j, "hot_pixel_value", m.hot_pixel_value, s);
  read(j, "cosmic_rays_per_frame", m.cosmic_rays_per_frame, s);
  read(j, "cosmic_ray_value", m.cosmic_ray_value, s);
  return m;
}

}  // namespace detail

/// Parses and validates a config document. Unknown keys are errors.
inline ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::check_keys;
  using detail::read;
  ExperimentConfig c;
  c.source = j;
  check_keys(j, "config", {"name", "seed", "workers", "deterministic", "dataset", "backbone", "training",
                           "marginalization", "eval", "sweep"});
  read(j, "name", c.name, "config");
  read(j, "seed", c.seed, "config");
  read(j, "workers", c.workers, "config");
  read(j, "deterministic", c.deterministic, "config");

  auto& d = c.dataset;
  if (j.contains("dataset")) {
    const auto& dj = j.at("dataset");
    const std::string s = "dataset";
    check_keys(dj, s, {"n_classes", "classes_file", "class_seed", "examples_per_class", "policy", "jitter_deg",
                       "dnmed_range", "include_flats", "n_flats", "airmass_range", "pwv_range", "instrument",
                       "materials", "class_generation", "split_fractions", "curation_threshold"});
    read(dj, "n_classes", d.n_classes, s);
    read(dj, "class_seed", d.class_seed, s);
    read(dj, "examples_per_class", d.examples_per_class, s);
    if (dj.contains("policy")) d.policy = sim::parse_policy(dj.at("policy").get<std::string>());
    read(dj, "jitter_deg", d.jitter_deg, s);
    detail::read_range(dj, "dnmed_range", d.dnmed_min, d.dnmed_max, s);
    read(dj, "include_flats", d.include_flats, s);
    read(dj, "n_flats", d.n_flats, s);
    detail::read_range(dj, "airmass_range", d.airmass_min, d.airmass_max, s);
    detail::read_range(dj, "pwv_range", d.pwv_min_mm, d.pwv_max_mm, s);
    if (dj.contains("instrument")) d.instrument = detail::instrument_from_json(dj.at("instrument"), d.grid, c.instrument_preset);
    if (dj.contains("materials")) {
      const auto& mj = dj.at("materials");
      check_keys(mj, "dataset.materials", {"n_materials", "features_per_material", "feature_depth", "feature_width_nm",
                                           "continuum_slope"});
      read(mj, "n_materials", d.materials.n_materials, s);
      read(mj, "features_per_material", d.materials.features_per_material, s);
      read(mj, "feature_depth", d.materials.feature_depth, s);
      read(mj, "feature_width_nm", d.materials.feature_width_nm, s);
      read(mj, "continuum_slope", d.materials.continuum_slope, s);
    }
    if (dj.contains("class_generation")) {
      const auto& gj = dj.at("class_generation");
      check_keys(gj, "dataset.class_generation", {"materials_per_class", "anisotropy"});
      read(gj, "materials_per_class", d.class_generation.materials_per_class, s);
      read(gj, "anisotropy", d.class_generation.anisotropy, s);
    }
    if (dj.contains("classes_file")) {
      std::filesystem::path p = dj.at("classes_file").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      d.class_specs = sim::load_class_specs(p.string());
    }
    if (dj.contains("split_fractions")) {
      const auto f = dj.at("split_fractions").get<std::vector<double>>();
      if (f.size() != 3) throw ConfigError("dataset.split_fractions needs three entries");
      d.split.fractions = {f[0], f[1], f[2]};
    }
    read(dj, "curation_threshold", c.curation_threshold, s);
  }

  auto& b = c.backbone;
  b.input_height = static_cast<int>(d.instrument.frame_height);
  b.input_width = static_cast<int>(d.instrument.frame_width);
  b.n_classes = static_cast<int>((d.class_specs.empty() ? d.n_classes : d.class_specs.size()) + (d.include_flats ? 1 : 0));
  if (j.contains("backbone")) {
    const auto& bj = j.at("backbone");
    check_keys(bj, "backbone", {"stem_kernel", "stem_stride", "stem_padding", "stage_widths", "blocks_per_stage",
                                "dropout_rate"});
    b = model::backbone_from_json(bj, b);
  }

  auto& t = c.training;
  if (j.contains("training")) {
    const auto& tj = j.at("training");
    const std::string s = "training";
    check_keys(tj, s, {"epochs", "batch_size", "lr", "swa_lr", "momentum", "weight_decay", "swa_fraction", "seed"});
    read(tj, "epochs", t.epochs, s);
    read(tj, "batch_size", t.batch_size, s);
    read(tj, "lr", t.lr, s);
    read(tj, "swa_lr", t.swa_lr, s);
    read(tj, "momentum", t.momentum, s);
    read(tj, "weight_decay", t.weight_decay, s);
    read(tj, "swa_fraction", t.swa_fraction, s);
    read(tj, "seed", t.seed, s);
  }

  auto& m = c.marginalization;
  if (j.contains("marginalization")) {
    const auto& mj = j.at("marginalization");
    const std::string s = "marginalization";
    check_keys(mj, s, {"methods", "n_models", "dropout_samples", "swag_rank", "swag_scale", "swag_samples"});
    if (mj.contains("methods")) {
      m.methods.clear();
      for (const auto& v : mj.at("methods")) m.methods.push_back(bayes::parse_source(v.get<std::string>()));
    }
    read(mj, "n_models", m.n_models, s);
    read(mj, "dropout_samples", m.dropout_samples, s);
    read(mj, "swag_rank", m.swag_rank, s);
    read(mj, "swag_scale", m.swag_scale, s);
    read(mj, "swag_samples", m.swag_samples, s);
  }

  auto& e = c.eval;
  if (j.contains("eval")) {
    const auto& ej = j.at("eval");
    const std::string s = "eval";
    check_keys(ej, s, {"k", "ece_bins", "temperature_grid", "thresholds", "dnmed_edges", "tempering",
                       "heldout_per_class", "batch_size", "svg"});
    read(ej, "k", e.k, s);
    read(ej, "ece_bins", e.ece_bins, s);
    if (ej.contains("temperature_grid")) {
      const auto& g = ej.at("temperature_grid");
      if (g.is_array()) {
        e.temperature_grid = g.get<std::vector<double>>();
      } else {
        check_keys(g, "eval.temperature_grid", {"min", "max", "step"});
        const double lo = g.value("min", 0.05), hi = g.value("max", 10.0), step = g.value("step", 0.05);
        if (!(step > 0.0) || !(lo > 0.0) || hi < lo) throw ConfigError("bad eval.temperature_grid range");
        e.temperature_grid.clear();
        for (long k = 0;; ++k) {
          const double v = lo + static_cast<double>(k) * step;
          if (v > hi + 1e-9) break;
          e.temperature_grid.push_back(std::round(v * 1e9) / 1e9);
        }
      }
    }
    read(ej, "thresholds", e.thresholds, s);
    read(ej, "dnmed_edges", e.dnmed_edges, s);
    if (ej.contains("tempering")) e.tempering = eval::parse_temper_point(ej.at("tempering").get<std::string>());
    read(ej, "heldout_per_class", e.heldout_per_class, s);
    read(ej, "batch_size", e.batch_size, s);
    read(ej, "svg", e.svg, s);
  }

  if (j.contains("sweep")) {
    const auto& sj = j.at("sweep");
    check_keys(sj, "sweep", {"examples_per_class", "policies"});
    read(sj, "examples_per_class", c.sweep.examples_per_class, "sweep");
    if (sj.contains("policies")) {
      c.sweep.policies.clear();
      for (const auto& v : sj.at("policies")) c.sweep.policies.push_back(sim::parse_policy(v.get<std::string>()));
    }
  }

  d.seed = derive_seed(c.seed, stream::frame, 0);
  d.split.seed = derive_seed(c.seed, stream::split, 0);
  d.workers = c.workers;
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot open config '" + p.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
  return config_from_json(j, p.parent_path());
}

}  // namespace spectranet::runner
