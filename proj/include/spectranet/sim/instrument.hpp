#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "spectranet/core/error.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/sim/frame.hpp"
#include "spectranet/sim/satellite.hpp"

namespace spectranet::sim {

/// Slit-less spectrograph focal plane. The point source is dispersed along columns
/// and spread vertically by a Gaussian cross-dispersion profile.
struct InstrumentModel {
  std::size_t frame_height = 64;
  std::size_t frame_width = 336;
  /// column(lambda) = dispersion_column0 + (lambda - dispersion_lambda0) * columns_per_nm
  double dispersion_lambda0 = 630.0 + 350.0 / 336.0 / 2.0;
  double dispersion_column0 = 0.0;
  double columns_per_nm = 336.0 / 350.0;
  double psf_sigma = 1.5;        // pixels
  double trace_row = 32.0;       // row of the strip center
  double bias_level = 100.0;     // counts
  double read_noise_sigma = 5.0; // counts
  double background_level = 20.0;    // sky counts at row 0
  double background_gradient = 0.1;  // counts per row
  double gain = 1.0;             // electrons per count
  bool shot_noise = true;
  double psf_window_sigmas = 6.0;
  // Optional outlier injection, off by default.
  double hot_pixel_rate = 0.0;
  double hot_pixel_value = 6.0e4;
  double cosmic_rays_per_frame = 0.0;
  double cosmic_ray_value = 3.0e4;

  /// Desk-scale default: 64 x 336 frame whose columns coincide with grid bins.
  static InstrumentModel desk(const WavelengthGrid& grid) { return aligned(grid, 64, 336, 1.5); }

  /// 200 x 1340 frame geometry.
  static InstrumentModel paper(const WavelengthGrid& grid) { return aligned(grid, 200, 1340, 3.0); }

  static InstrumentModel aligned(const WavelengthGrid& grid, std::size_t height, std::size_t width,
                                 double psf_sigma) {
    InstrumentModel m;
    m.frame_height = height;
    m.frame_width = width;
    m.psf_sigma = psf_sigma;
    m.trace_row = static_cast<double>(height / 2);
    m.dispersion_lambda0 = grid.center(0);
    m.dispersion_column0 = 0.0;
    m.columns_per_nm = static_cast<double>(width - 1) / (grid.center(grid.n_bins - 1) - grid.center(0));
    return m;
  }

  [[nodiscard]] InstrumentModel noiseless() const {
    InstrumentModel m = *this;
    m.shot_noise = false;
    m.read_noise_sigma = 0.0;
    m.hot_pixel_rate = 0.0;
    m.cosmic_rays_per_frame = 0.0;
    return m;
  }

  [[nodiscard]] double column_of(double lambda) const {
    return dispersion_column0 + (lambda - dispersion_lambda0) * columns_per_nm;
  }
  [[nodiscard]] double lambda_of(double column) const {
    return dispersion_lambda0 + (column - dispersion_column0) / columns_per_nm;
  }

  void validate(const WavelengthGrid& grid) const {
    if (frame_height == 0 || frame_width == 0) throw ConfigError("frame dimensions must be positive");
    if (!(psf_sigma > 0.0)) throw ConfigError("psf_sigma must be > 0");
    if (!(trace_row >= 0.0 && trace_row < static_cast<double>(frame_height)))
      throw ConfigError("trace_row must lie inside the frame");
    if (!(columns_per_nm > 0.0)) throw ConfigError("dispersion must increase with wavelength");
    const double c0 = column_of(grid.center(0));
    const double c1 = column_of(grid.center(grid.n_bins - 1));
    const double tol = 1e-9 * static_cast<double>(frame_width);
    if (c0 < -tol || c1 >= static_cast<double>(frame_width) + tol)
      throw ConfigError("dispersion maps the wavelength grid outside the frame");
    if (!(gain > 0.0)) throw ConfigError("gain must be > 0");
    if (read_noise_sigma < 0.0) throw ConfigError("read_noise_sigma must be >= 0");
  }

  /// Fraction of a unit-flux Gaussian landing on each row inside the truncation
  /// window; rows outside the window receive nothing.
  [[nodiscard]] std::vector<double> row_profile() const {
    std::vector<double> p(frame_height, 0.0);
    const double half = psf_window_sigmas * psf_sigma;
    const double k = 1.0 / (psf_sigma * std::sqrt(2.0));
    for (std::size_t r = 0; r < frame_height; ++r) {
      const double d = static_cast<double>(r) - trace_row;
      if (std::abs(d) > half) continue;
      p[r] = 0.5 * (std::erf((d + 0.5) * k) - std::erf((d - 0.5) * k));
    }
    return p;
  }
};

/// sed value seen by each detector column (linear interpolation between bin centers,
/// zero outside the grid).
inline std::vector<double> column_flux(const Sed& sed, const InstrumentModel& instr) {
  const auto& g = sed.grid;
  std::vector<double> out(instr.frame_width, 0.0);
  const double c0 = g.center(0);
  const double step = g.step();
  const double last = static_cast<double>(g.n_bins - 1);
  for (std::size_t c = 0; c < instr.frame_width; ++c) {
    double pos = (instr.lambda_of(static_cast<double>(c)) - c0) / step;
    const double nearest = std::round(pos);
    if (std::abs(pos - nearest) < 1e-9) pos = nearest;
    if (pos < 0.0 || pos > last) continue;
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const double t = pos - static_cast<double>(i0);
    out[c] = t == 0.0 ? sed.rate[i0] : (1.0 - t) * sed.rate[i0] + t * sed.rate[i0 + 1];
  }
  return out;
}

namespace detail {

inline void inject_outliers(Frame& f, const InstrumentModel& instr, Rng& rng) {
  if (instr.hot_pixel_rate > 0.0) {
    std::bernoulli_distribution hot(std::min(1.0, instr.hot_pixel_rate));
    for (double& p : f.pixels)
      if (hot(rng)) p = instr.hot_pixel_value;
  }
  if (instr.cosmic_rays_per_frame > 0.0) {
    std::poisson_distribution<int> count(instr.cosmic_rays_per_frame);
    std::uniform_int_distribution<std::size_t> row(0, f.height - 1), col(0, f.width - 1);
    std::uniform_int_distribution<int> len(1, 4), dir(0, 1);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      std::size_t r = row(rng), c = col(rng);
      const int l = len(rng);
      const bool horizontal = dir(rng) == 1;
      for (int k = 0; k < l && r < f.height && c < f.width; ++k) {
        f.at(r, c) += instr.cosmic_ray_value;
        (horizontal ? c : r) += 1;
      }
    }
  }
}

}  // namespace detail

/// Expected counts without any noise: exposure * flux(c) * profile(r) + background + bias.
inline Frame render_noiseless(const Sed& sed, const InstrumentModel& instr, double exposure_scale) {
  instr.validate(sed.grid);
  if (!(exposure_scale > 0.0)) throw ConfigError("exposure_scale must be > 0");
  const auto flux = column_flux(sed, instr);
  const auto prof = instr.row_profile();
  Frame f(instr.frame_height, instr.frame_width);
  for (std::size_t r = 0; r < f.height; ++r) {
    const double bg = instr.background_level + instr.background_gradient * static_cast<double>(r);
    for (std::size_t c = 0; c < f.width; ++c)
      f.at(r, c) = std::max(0.0, exposure_scale * flux[c] * prof[r] + bg + instr.bias_level);
  }
  return f;
}

/// Full detector model: Poisson shot noise on signal + sky, Gaussian read noise,
/// bias, optional outliers, clipped at zero and rounded to float32.
inline Frame render_frame(const Sed& sed, const InstrumentModel& instr, double exposure_scale, Rng& rng) {
  instr.validate(sed.grid);
  if (!(exposure_scale > 0.0)) throw ConfigError("exposure_scale must be > 0");
  const auto flux = column_flux(sed, instr);
  const auto prof = instr.row_profile();
  std::normal_distribution<double> read(0.0, 1.0);
  Frame f(instr.frame_height, instr.frame_width);
  for (std::size_t r = 0; r < f.height; ++r) {
    const double bg = std::max(0.0, instr.background_level + instr.background_gradient * static_cast<double>(r));
    for (std::size_t c = 0; c < f.width; ++c) {
      double expected = exposure_scale * flux[c] * prof[r] + bg;
      double counts = expected;
      if (instr.shot_noise && expected > 0.0) {
        std::poisson_distribution<long long> shot(expected * instr.gain);
        counts = static_cast<double>(shot(rng)) / instr.gain;
      }
      if (instr.read_noise_sigma > 0.0) counts += instr.read_noise_sigma * read(rng);
      f.at(r, c) = counts + instr.bias_level;
    }
  }
  detail::inject_outliers(f, instr, rng);
  for (double& p : f.pixels) p = static_cast<double>(static_cast<float>(std::max(0.0, p)));
  return f;
}

}  // namespace spectranet::sim
