#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spectranet/core/error.hpp"

namespace spectranet::sim {

/// Uniform wavelength binning. Bin i covers
/// [lambda_min + i*step, lambda_min + (i+1)*step) and is represented by its center.
struct WavelengthGrid {
  double lambda_min = 630.0;  // nm
  double lambda_max = 980.0;  // nm
  std::size_t n_bins = 336;

  void validate() const {
    if (!(lambda_min < lambda_max)) throw ConfigError("wavelength grid needs lambda_min < lambda_max");
    if (n_bins < 2) throw ConfigError("wavelength grid needs at least 2 bins");
  }
  [[nodiscard]] double step() const { return (lambda_max - lambda_min) / static_cast<double>(n_bins); }
  [[nodiscard]] double center(std::size_t i) const {
    return lambda_min + (static_cast<double>(i) + 0.5) * step();
  }
  [[nodiscard]] std::vector<double> centers() const {
    std::vector<double> out(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) out[i] = center(i);
    return out;
  }
  friend bool operator==(const WavelengthGrid&, const WavelengthGrid&) = default;
};

inline void require_same_grid(const WavelengthGrid& a, const WavelengthGrid& b, const char* what) {
  if (!(a == b)) throw ConfigError(std::string("wavelength grid mismatch: ") + what);
}

inline void require_length(std::span<const double> v, const WavelengthGrid& g, const char* what) {
  if (v.size() != g.n_bins)
    throw ConfigError(std::string(what) + " has " + std::to_string(v.size()) +
                      " samples, grid has " + std::to_string(g.n_bins));
}

struct MaterialSpectrum {
  std::string name;
  std::vector<double> reflectance;  // unitless, [0,1], one per grid bin

  void validate(const WavelengthGrid& grid) const {
    require_length(reflectance, grid, ("material '" + name + "'").c_str());
    for (double r : reflectance)
      if (!(r >= 0.0 && r <= 1.0))
        throw ConfigError("material '" + name + "' reflectance outside [0,1]");
  }
};

/// Relative photon flux of the illuminating star.
struct SolarSpectrum {
  WavelengthGrid grid;
  std::vector<double> photon_flux;

  /// Blackbody photon spectrum n(lambda) ~ lambda^-4 / (exp(hc/lambda k T) - 1),
  /// normalized to a peak of 1 on the grid.
  static SolarSpectrum blackbody(const WavelengthGrid& grid, double temperature_k = 5772.0) {
    grid.validate();
    constexpr double hc_over_k = 1.438776877e7;  // nm K
    SolarSpectrum s{grid, std::vector<double>(grid.n_bins)};
    double peak = 0.0;
    for (std::size_t i = 0; i < grid.n_bins; ++i) {
      const double lam = grid.center(i);
      s.photon_flux[i] = std::pow(lam, -4.0) / std::expm1(hc_over_k / (lam * temperature_k));
      peak = std::max(peak, s.photon_flux[i]);
    }
    for (double& v : s.photon_flux) v /= peak;
    return s;
  }

  void validate() const {
    require_length(photon_flux, grid, "solar spectrum");
    for (double v : photon_flux)
      if (!(v > 0.0)) throw ConfigError("solar spectrum must be strictly positive");
  }
};

/// Parametric sky transmission: exp(-airmass * tau(lambda)), where tau is a smooth
/// Rayleigh + aerosol continuum, a fixed O2 A-band, and water bands scaled by PWV.
struct AtmosphereModel {
  WavelengthGrid grid;
  double airmass = 1.0;
  double pwv_mm = 2.0;
  std::vector<double> transmission;

  static std::vector<double> optical_depth(const WavelengthGrid& grid, double pwv_mm) {
    struct Band { double center, width, strength; };
    // Strengths are optical depth per mm of water at band center.
    static constexpr Band water[] = {{718.0, 6.0, 0.020}, {822.0, 9.0, 0.040}, {935.0, 16.0, 0.110}};
    static constexpr Band oxygen{762.0, 2.5, 0.60};
    std::vector<double> tau(grid.n_bins);
    for (std::size_t i = 0; i < grid.n_bins; ++i) {
      const double lam = grid.center(i);
      const double x = lam / 550.0;
      double t = 0.0970 * std::pow(x, -4.0) + 0.030 * std::pow(x, -1.3);
      auto gauss = [lam](const Band& b) {
        const double z = (lam - b.center) / b.width;
        return b.strength * std::exp(-0.5 * z * z);
      };
      t += gauss(oxygen);
      for (const Band& b : water) t += pwv_mm * gauss(b);
      tau[i] = t;
    }
    return tau;
  }

  static AtmosphereModel make(const WavelengthGrid& grid, double airmass, double pwv_mm) {
    if (!(airmass >= 1.0)) throw ConfigError("airmass must be >= 1");
    if (!(pwv_mm >= 0.0)) throw ConfigError("pwv_mm must be >= 0");
    grid.validate();
    AtmosphereModel a{grid, airmass, pwv_mm, optical_depth(grid, pwv_mm)};
    for (double& t : a.transmission) t = std::exp(-airmass * t);
    return a;
  }

  /// Fully transparent sky, useful for controlled tests.
  static AtmosphereModel transparent(const WavelengthGrid& grid) {
    return AtmosphereModel{grid, 1.0, 0.0, std::vector<double>(grid.n_bins, 1.0)};
  }
};

}  // namespace spectranet::sim
