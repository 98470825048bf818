#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/core/error.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/sim/orientation.hpp"
#include "spectranet/sim/spectra.hpp"

namespace spectranet::sim {

/// Generative description of one satellite class: a set of surface materials whose
/// visible fractions depend on orientation through clipped spherical harmonics.
struct SatelliteClassSpec {
  std::string class_id;
  WavelengthGrid grid;
  std::vector<MaterialSpectrum> materials;
  /// One coefficient list per material, 1, 4 or 9 entries (degree 0, 1 or 2).
  std::vector<std::vector<double>> weight_basis;

  void validate() const {
    grid.validate();
    if (materials.empty()) throw ConfigError("class '" + class_id + "' has no materials");
    if (weight_basis.size() != materials.size())
      throw ConfigError("class '" + class_id + "' needs one weight basis per material");
    for (const auto& m : materials) m.validate(grid);
    for (const auto& c : weight_basis)
      if (c.size() != 1 && c.size() != 4 && c.size() != 9)
        throw ConfigError("class '" + class_id + "' weight basis must have 1, 4 or 9 coefficients");
  }

  /// Nonnegative mixing weights summing to one. Falls back to uniform when every
  /// clipped harmonic expansion vanishes.
  [[nodiscard]] std::vector<double> mixing_weights(const Orientation& o) const {
    const auto y = real_sph_harm_l2(o);
    std::vector<double> w(materials.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto& c = weight_basis[i];
      double v = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) v += c[k] * y[k];
      w[i] = std::max(0.0, v);
      total += w[i];
    }
    if (total <= 0.0) {
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
      return w;
    }
    for (double& v : w) v /= total;
    return w;
  }
};

/// Spectral photon rate on a wavelength grid.
struct Sed {
  WavelengthGrid grid;
  std::vector<double> rate;
};

/// rate = sun * transmission * sum_i w_i(orientation) * reflectance_i
inline Sed compose_sed(const SatelliteClassSpec& spec, const Orientation& orientation,
                       const SolarSpectrum& sun, const AtmosphereModel& atm) {
  require_same_grid(spec.grid, sun.grid, "class spec vs solar spectrum");
  require_same_grid(spec.grid, atm.grid, "class spec vs atmosphere");
  require_length(sun.photon_flux, spec.grid, "solar spectrum");
  require_length(atm.transmission, spec.grid, "atmospheric transmission");
  for (const auto& m : spec.materials) require_length(m.reflectance, spec.grid, m.name.c_str());

  const auto w = spec.mixing_weights(orientation);
  Sed sed{spec.grid, std::vector<double>(spec.grid.n_bins, 0.0)};
  for (std::size_t j = 0; j < spec.grid.n_bins; ++j) {
    double r = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) r += w[i] * spec.materials[i].reflectance[j];
    sed.rate[j] = std::max(0.0, sun.photon_flux[j] * atm.transmission[j] * r);
  }
  return sed;
}

// ---------------------------------------------------------------------------
// Procedural material library and class generation.

struct MaterialLibraryConfig {
  std::size_t n_materials = 8;
  std::size_t features_per_material = 3;
  double feature_depth = 0.25;      // max amplitude of a Gaussian absorption/emission feature
  double feature_width_nm = 25.0;   // mean feature width
  double continuum_slope = 0.3;     // max |slope| across the band
};

struct ClassGenerationConfig {
  std::size_t materials_per_class = 3;
  /// Spread of the l>=1 harmonic coefficients relative to the isotropic term.
  double anisotropy = 0.8;
};

/// Smooth reflectance curves with a linear continuum and a few Gaussian features,
/// clipped to [0.02, 0.98].
inline std::vector<MaterialSpectrum> generate_material_library(const WavelengthGrid& grid,
                                                               const MaterialLibraryConfig& cfg,
                                                               std::uint64_t seed) {
  grid.validate();
  Rng rng(derive_seed(seed, stream::materials));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<MaterialSpectrum> lib;
  lib.reserve(cfg.n_materials);
  const double span = grid.lambda_max - grid.lambda_min;
  for (std::size_t m = 0; m < cfg.n_materials; ++m) {
    const double base = 0.25 + 0.5 * u01(rng);
    const double slope = cfg.continuum_slope * (2.0 * u01(rng) - 1.0);
    struct Feature { double center, width, amp; };
    std::vector<Feature> feats;
    for (std::size_t f = 0; f < cfg.features_per_material; ++f) {
      feats.push_back({grid.lambda_min + span * u01(rng),
                       cfg.feature_width_nm * (0.5 + u01(rng)),
                       cfg.feature_depth * (2.0 * u01(rng) - 1.0)});
    }
    MaterialSpectrum ms{"material_" + std::to_string(m), std::vector<double>(grid.n_bins)};
    for (std::size_t j = 0; j < grid.n_bins; ++j) {
      const double lam = grid.center(j);
      const double x = (lam - grid.lambda_min) / span - 0.5;
      double r = base + slope * x;
      for (const auto& ft : feats) {
        const double z = (lam - ft.center) / ft.width;
        r += ft.amp * std::exp(-0.5 * z * z);
      }
      ms.reflectance[j] = std::clamp(r, 0.02, 0.98);
    }
    lib.push_back(std::move(ms));
  }
  return lib;
}

/// Draws `n_classes` specs, each mixing a random subset of the library.
inline std::vector<SatelliteClassSpec> generate_classes(const WavelengthGrid& grid,
                                                        const std::vector<MaterialSpectrum>& library,
                                                        std::size_t n_classes,
                                                        const ClassGenerationConfig& cfg,
                                                        std::uint64_t seed) {
  if (library.empty()) throw ConfigError("material library is empty");
  const std::size_t per_class = std::min(cfg.materials_per_class, library.size());
  if (per_class == 0) throw ConfigError("materials_per_class must be >= 1");
  std::vector<SatelliteClassSpec> out;
  out.reserve(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) {
    Rng rng(derive_seed(seed, stream::class_spec, k));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<std::size_t> idx(library.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    char name[32];
    std::snprintf(name, sizeof name, "sat%02zu", k);
    SatelliteClassSpec spec{name, grid, {}, {}};
    for (std::size_t i = 0; i < per_class; ++i) {
      spec.materials.push_back(library[idx[i]]);
      std::vector<double> c(9);
      c[0] = 1.0 + u01(rng);
      for (std::size_t h = 1; h < 9; ++h) c[h] = cfg.anisotropy * normal(rng);
      spec.weight_basis.push_back(std::move(c));
    }
    out.push_back(std::move(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Class-spec JSON.

inline nlohmann::json to_json(const WavelengthGrid& g) {
  return {{"lambda_min", g.lambda_min}, {"lambda_max", g.lambda_max}, {"n_bins", g.n_bins}};
}

inline WavelengthGrid grid_from_json(const nlohmann::json& j) {
  WavelengthGrid g;
  g.lambda_min = j.value("lambda_min", g.lambda_min);
  g.lambda_max = j.value("lambda_max", g.lambda_max);
  g.n_bins = j.value("n_bins", g.n_bins);
  g.validate();
  return g;
}

inline nlohmann::json to_json(const SatelliteClassSpec& s) {
  nlohmann::json mats = nlohmann::json::array();
  for (const auto& m : s.materials) mats.push_back({{"name", m.name}, {"reflectance", m.reflectance}});
  return {{"class_id", s.class_id}, {"grid", to_json(s.grid)}, {"materials", mats},
          {"weight_basis", s.weight_basis}};
}

inline SatelliteClassSpec class_spec_from_json(const nlohmann::json& j) {
  try {
    SatelliteClassSpec s;
    s.class_id = j.at("class_id").get<std::string>();
    s.grid = grid_from_json(j.at("grid"));
    for (const auto& m : j.at("materials"))
      s.materials.push_back({m.at("name").get<std::string>(), m.at("reflectance").get<std::vector<double>>()});
    s.weight_basis = j.at("weight_basis").get<std::vector<std::vector<double>>>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed class spec: ") + e.what());
  }
}

/// Accepts either a single class object or {"classes": [...]}.
inline std::vector<SatelliteClassSpec> load_class_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open class-spec file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
  std::vector<SatelliteClassSpec> out;
  if (j.contains("classes"))
    for (const auto& c : j.at("classes")) out.push_back(class_spec_from_json(c));
  else
    out.push_back(class_spec_from_json(j));
  return out;
}

inline void save_class_specs(const std::string& path, const std::vector<SatelliteClassSpec>& specs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : specs) arr.push_back(to_json(s));
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write class-spec file '" + path + "'");
  out << nlohmann::json{{"classes", arr}}.dump(1) << '\n';
}

inline void require_unique_ids(const std::vector<SatelliteClassSpec>& specs) {
  std::set<std::string> seen;
  for (const auto& s : specs)
    if (!seen.insert(s.class_id).second) throw ConfigError("duplicate class id '" + s.class_id + "'");
}

}  // namespace spectranet::sim
