#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spectranet/core/error.hpp"
#include "spectranet/core/log.hpp"
#include "spectranet/core/parallel.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/metrics/dnmed.hpp"
#include "spectranet/metrics/split.hpp"
#include "spectranet/sim/exposure.hpp"
#include "spectranet/sim/instrument.hpp"
#include "spectranet/sim/manifest.hpp"
#include "spectranet/sim/satellite.hpp"

namespace spectranet::sim {

struct DatasetConfig {
  WavelengthGrid grid;
  InstrumentModel instrument = InstrumentModel::desk(WavelengthGrid{});
  MaterialLibraryConfig materials;
  ClassGenerationConfig class_generation;
  std::size_t n_classes = 9;
  /// Explicit class specs; when non-empty they replace procedural generation.
  std::vector<SatelliteClassSpec> class_specs;
  std::uint64_t class_seed = 1;

  std::size_t examples_per_class = 200;
  OrientationPolicy policy = OrientationPolicy::nadir;
  double jitter_deg = 1.0;
  Orientation nadir_reference = kNadirReference;
  double dnmed_min = 50.0;
  double dnmed_max = 1000.0;
  bool include_flats = false;
  std::size_t n_flats = 100;

  double airmass_min = 1.0;
  double airmass_max = 1.5;
  double pwv_min_mm = 1.0;
  double pwv_max_mm = 5.0;
  double solar_temperature_k = 5772.0;

  int dnmed_poly_degree = 2;
  metrics::SplitAssignment split;

  std::uint64_t seed = 0;
  /// Seed stream for frames; a held-out set uses a different stream so it never
  /// shares frames with the training data.
  std::uint64_t frame_stream = stream::frame;
  std::size_t workers = 1;

  [[nodiscard]] std::vector<SatelliteClassSpec> resolve_classes() const {
    if (!class_specs.empty()) {
      for (const auto& s : class_specs) require_same_grid(s.grid, grid, ("class '" + s.class_id + "'").c_str());
      return class_specs;
    }
    const auto lib = generate_material_library(grid, materials, class_seed);
    return generate_classes(grid, lib, n_classes, class_generation, class_seed);
  }

  void validate() const {
    grid.validate();
    instrument.validate(grid);
    if (examples_per_class < 1) throw ConfigError("examples_per_class must be >= 1");
    if (!(dnmed_min > 0.0 && dnmed_min <= dnmed_max)) throw ConfigError("need 0 < dnmed_min <= dnmed_max");
    if (!(airmass_min >= 1.0 && airmass_min <= airmass_max)) throw ConfigError("need 1 <= airmass_min <= airmass_max");
    if (!(pwv_min_mm >= 0.0 && pwv_min_mm <= pwv_max_mm)) throw ConfigError("need 0 <= pwv_min <= pwv_max");
    const std::size_t classes = class_specs.empty() ? n_classes : class_specs.size();
    if (classes == 0) throw ConfigError("dataset needs at least one target class");
    if (classes + (include_flats ? 1 : 0) < 2)
      log::warn("dataset has a single label; usable for rendering checks, not for training");
  }
};

/// One frame drawn from a class spec with its own RNG stream.
struct RenderedExample {
  Frame frame;
  ManifestRecord record;
};

inline RenderedExample render_example(const DatasetConfig& cfg, const SatelliteClassSpec* spec,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> dn(cfg.dnmed_min, cfg.dnmed_max);
  std::uniform_real_distribution<double> am(cfg.airmass_min, cfg.airmass_max);
  std::uniform_real_distribution<double> pwv(cfg.pwv_min_mm, cfg.pwv_max_mm);

  RenderedExample ex;
  ex.record.seed = seed;
  metrics::DnMedOptions dn_opt;
  dn_opt.poly_degree = cfg.dnmed_poly_degree;
  dn_opt.psf_sigma = cfg.instrument.psf_sigma;

  if (spec == nullptr) {
    // Flat: the instrument exposed against empty sky.
    Sed empty{cfg.grid, std::vector<double>(cfg.grid.n_bins, 0.0)};
    ex.frame = render_frame(empty, cfg.instrument, 1.0, rng);
    ex.record.class_id = kFlatClassId;
  } else {
    const Orientation o = sample_orientation(cfg.policy, cfg.jitter_deg, rng, cfg.nadir_reference);
    const double target = dn(rng);
    const auto atm = AtmosphereModel::make(cfg.grid, am(rng), pwv(rng));
    const auto sun = SolarSpectrum::blackbody(cfg.grid, cfg.solar_temperature_k);
    const Sed sed = compose_sed(*spec, o, sun, atm);
    const double scale = calibrate_exposure(sed, cfg.instrument, target, dn_opt);
    ex.frame = render_frame(sed, cfg.instrument, scale, rng);
    ex.record.class_id = spec->class_id;
    ex.record.orientation = o;
    ex.record.target_dnmed = target;
  }
  ex.record.measured_dnmed = metrics::dn_med(ex.frame, dn_opt).dnmed;
  ex.frame.meta = {ex.record.class_id, ex.record.orientation, ex.record.target_dnmed, seed};
  return ex;
}

/// Seed of example `index` of class slot `class_index`. Keyed per class so a
/// smaller dataset is a prefix of a larger one with the same seed.
inline std::uint64_t example_seed(const DatasetConfig& cfg, std::size_t class_index, std::size_t index) {
  return derive_seed(cfg.seed, cfg.frame_stream, (static_cast<std::uint64_t>(class_index) << 32) | index);
}

/// Renders every frame to `out_dir/frames`, writes `manifest.jsonl` and
/// `classes.json`, and returns the (split-labelled) manifest.
inline Manifest generate_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const auto classes = cfg.resolve_classes();
  require_unique_ids(classes);
  for (const auto& c : classes) {
    c.validate();
    if (c.class_id == kFlatClassId) throw ConfigError("class id 'flat' is reserved");
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  struct Job { std::size_t class_index; std::size_t index; const SatelliteClassSpec* spec; };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < classes.size(); ++k)
    for (std::size_t i = 0; i < cfg.examples_per_class; ++i) jobs.push_back({k, i, &classes[k]});
  if (cfg.include_flats)
    for (std::size_t i = 0; i < cfg.n_flats; ++i) jobs.push_back({classes.size(), i, nullptr});

  Manifest manifest{out_dir, std::vector<ManifestRecord>(jobs.size())};
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    auto ex = render_example(cfg, job.spec, example_seed(cfg, job.class_index, job.index));
    char name[64];
    std::snprintf(name, sizeof name, "frames/%s_%05zu.spfr", ex.record.class_id.c_str(), job.index);
    ex.record.path = name;
    write_frame(out_dir / ex.record.path, ex.frame);
    manifest.records[j] = std::move(ex.record);
  });

  auto split_cfg = cfg.split;
  manifest = metrics::split(manifest, split_cfg);
  write_manifest(out_dir / "manifest.jsonl", manifest);
  save_class_specs((out_dir / "classes.json").string(), classes);
  log::info("generated " + std::to_string(manifest.size()) + " frames in " + out_dir.string());
  return manifest;
}

}  // namespace spectranet::sim
