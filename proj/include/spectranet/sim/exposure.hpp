#pragma once

#include <cmath>

#include "spectranet/core/error.hpp"
#include "spectranet/metrics/dnmed.hpp"
#include "spectranet/sim/instrument.hpp"

namespace spectranet::sim {

/// Exposure scale whose noiseless frame has DN_med within `rel_tol` of the target.
/// Brackets by doubling/halving, then bisects geometrically.
inline double calibrate_exposure(const Sed& sed, const InstrumentModel& instr, double target_dnmed,
                                 metrics::DnMedOptions dn_opt = {}, double rel_tol = 1e-4) {
  if (!(target_dnmed > 0.0)) throw ConfigError("target_dnmed must be > 0");
  const InstrumentModel quiet = instr.noiseless();
  dn_opt.psf_sigma = instr.psf_sigma;
  auto measure = [&](double scale) { return metrics::dn_med(render_noiseless(sed, quiet, scale), dn_opt).dnmed; };

  double hi = 1.0;
  double dn_hi = measure(hi);
  int guard = 0;
  while (dn_hi < target_dnmed) {
    if (++guard > 200) throw SimulationError("cannot bracket target DN_med " + std::to_string(target_dnmed) +
                                             " (spectrum carries no signal)");
    hi *= 2.0;
    dn_hi = measure(hi);
  }
  double lo = hi / 2.0;
  double dn_lo = measure(lo);
  guard = 0;
  while (dn_lo > target_dnmed) {
    if (++guard > 200) throw SimulationError("cannot bracket target DN_med from below");
    hi = lo;
    lo /= 2.0;
    dn_lo = measure(lo);
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double dn = measure(mid);
    if (std::abs(dn - target_dnmed) <= rel_tol * target_dnmed) return mid;
    (dn < target_dnmed ? lo : hi) = mid;
  }
  throw SimulationError("exposure bisection did not converge");
}

}  // namespace spectranet::sim
