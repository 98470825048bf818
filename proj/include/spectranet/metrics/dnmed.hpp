#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spectranet/core/error.hpp"
#include "spectranet/sim/frame.hpp"

namespace spectranet::metrics {

/// Which axis the median runs along.
///  along_dispersion: median of each row over columns, giving a cross-dispersion
///    profile; background fit over rows; sum over the trace window rows.
///  across_dispersion: median of each column over rows; background fit over
///    columns from the rows outside the trace window; sum over columns. For a
///    narrow strip this collapses toward the background level.
enum class MedianAxis { along_dispersion, across_dispersion };

struct DnMedOptions {
  int poly_degree = 2;
  double psf_sigma = 1.5;
  double window_sigmas = 6.0;
  MedianAxis axis = MedianAxis::along_dispersion;
};

struct DnMedReport {
  double dnmed = 0.0;
  std::vector<double> row_profile;     // per-row (or per-column) medians
  std::vector<double> background_fit;  // polynomial evaluated on the same index
  int poly_degree = 0;
  std::size_t trace_row = 0;
  std::size_t window_lo = 0;  // inclusive
  std::size_t window_hi = 0;  // inclusive
};

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Least-squares polynomial through (x_i, y_i) for the `use` mask, evaluated at
/// every x. Abscissae are mapped to [-1, 1] for conditioning.
inline std::vector<double> poly_fit_eval(const std::vector<double>& y, const std::vector<bool>& use,
                                         int degree) {
  const std::size_t n = y.size();
  const double mid = 0.5 * static_cast<double>(n - 1);
  const double half = std::max(mid, 1.0);
  auto xs = [&](std::size_t i) { return (static_cast<double>(i) - mid) / half; };
  const auto m = static_cast<Eigen::Index>(std::count(use.begin(), use.end(), true));
  Eigen::MatrixXd a(m, degree + 1);
  Eigen::VectorXd b(m);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!use[i]) continue;
    double p = 1.0;
    for (int d = 0; d <= degree; ++d, p *= xs(i)) a(row, d) = p;
    b(row++) = y[i];
  }
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = 1.0, v = 0.0;
    for (int d = 0; d <= degree; ++d, p *= xs(i)) v += coef(d) * p;
    out[i] = v;
  }
  return out;
}

}  // namespace detail

/// Background-subtracted, median-based signal of the spectral strip.
inline DnMedReport dn_med(const sim::Frame& frame, const DnMedOptions& opt = {}) {
  if (frame.empty()) throw DataError("dn_med of an empty frame");
  if (opt.poly_degree < 0) throw ConfigError("poly_degree must be >= 0");
  if (!(opt.psf_sigma > 0.0)) throw ConfigError("psf_sigma must be > 0");

  const std::size_t h = frame.height, w = frame.width;
  std::vector<double> row_med(h);
  std::vector<double> buf(w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(frame.pixels.begin() + static_cast<std::ptrdiff_t>(r * w), w, buf.begin());
    row_med[r] = detail::median(buf);
  }

  DnMedReport rep;
  rep.poly_degree = opt.poly_degree;
  rep.trace_row = static_cast<std::size_t>(std::max_element(row_med.begin(), row_med.end()) - row_med.begin());
  const auto half = static_cast<std::size_t>(std::ceil(opt.window_sigmas * opt.psf_sigma));
  rep.window_lo = rep.trace_row >= half ? rep.trace_row - half : 0;
  rep.window_hi = std::min(h - 1, rep.trace_row + half);

  std::vector<bool> background(h, true);
  for (std::size_t r = rep.window_lo; r <= rep.window_hi; ++r) background[r] = false;
  const auto usable = static_cast<std::size_t>(std::count(background.begin(), background.end(), true));
  if (static_cast<std::size_t>(opt.poly_degree) >= usable)
    throw ConfigError("poly_degree " + std::to_string(opt.poly_degree) + " needs more than " +
                      std::to_string(usable) + " background rows");

  if (opt.axis == MedianAxis::along_dispersion) {
    rep.row_profile = row_med;
    rep.background_fit = detail::poly_fit_eval(row_med, background, opt.poly_degree);
    double sum = 0.0;
    for (std::size_t r = rep.window_lo; r <= rep.window_hi; ++r) sum += row_med[r] - rep.background_fit[r];
    rep.dnmed = sum;
    return rep;
  }

  // Across-dispersion reading: per-column medians over all rows, background from
  // per-column medians over the rows outside the trace window.
  if (static_cast<std::size_t>(opt.poly_degree) >= w)
    throw ConfigError("poly_degree must be smaller than the frame width");
  std::vector<double> col_med(w), col_bkg(w);
  std::vector<double> all(h), bk;
  bk.reserve(usable);
  for (std::size_t c = 0; c < w; ++c) {
    bk.clear();
    for (std::size_t r = 0; r < h; ++r) {
      all[r] = frame.at(r, c);
      if (background[r]) bk.push_back(all[r]);
    }
    col_med[c] = detail::median(all);
    col_bkg[c] = detail::median(bk);
  }
  rep.row_profile = col_med;
  rep.background_fit = detail::poly_fit_eval(col_bkg, std::vector<bool>(w, true), opt.poly_degree);
  double sum = 0.0;
  for (std::size_t c = 0; c < w; ++c) sum += col_med[c] - rep.background_fit[c];
  rep.dnmed = sum;
  return rep;
}

inline MedianAxis parse_axis(const std::string& s) {
  if (s == "along" || s == "along_dispersion") return MedianAxis::along_dispersion;
  if (s == "across" || s == "across_dispersion") return MedianAxis::across_dispersion;
  throw ConfigError("unknown median axis '" + s + "'");
}

}  // namespace spectranet::metrics
