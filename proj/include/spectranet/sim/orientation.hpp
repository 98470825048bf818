#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "spectranet/core/error.hpp"
#include "spectranet/core/rng.hpp"

namespace spectranet::sim {

/// Direction on the unit sphere: polar angle theta in [0, pi], azimuth phi in [0, 2pi).
struct Orientation {
  double theta = 0.0;
  double phi = 0.0;

  [[nodiscard]] std::array<double, 3> unit_vector() const {
    const double st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
  }

  static Orientation from_vector(double x, double y, double z) {
    const double r = std::sqrt(x * x + y * y + z * z);
    Orientation o;
    o.theta = std::acos(std::clamp(z / r, -1.0, 1.0));
    o.phi = std::atan2(y, x);
    if (o.phi < 0.0) o.phi += 2.0 * std::numbers::pi;
    if (o.phi >= 2.0 * std::numbers::pi) o.phi = 0.0;
    return o;
  }

  friend bool operator==(const Orientation&, const Orientation&) = default;
};

enum class OrientationPolicy { nadir, random };

inline OrientationPolicy parse_policy(const std::string& s) {
  if (s == "nadir") return OrientationPolicy::nadir;
  if (s == "random") return OrientationPolicy::random;
  throw ConfigError("unknown orientation policy '" + s + "' (expected nadir|random)");
}

inline const char* to_string(OrientationPolicy p) {
  return p == OrientationPolicy::nadir ? "nadir" : "random";
}

/// Reference attitude for nadir pointing.
inline constexpr Orientation kNadirReference{std::numbers::pi / 3.0, std::numbers::pi / 4.0};

/// Nadir: the reference direction moved to a point drawn uniformly from the
/// spherical cap of radius jitter_deg around it. Random: area-uniform on the sphere.
inline Orientation sample_orientation(OrientationPolicy policy, double jitter_deg, Rng& rng,
                                      Orientation reference = kNadirReference) {
  if (!(jitter_deg >= 0.0)) throw ConfigError("jitter_deg must be >= 0");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  if (policy == OrientationPolicy::random) {
    const double cos_theta = 1.0 - 2.0 * u01(rng);
    const double phi = two_pi * u01(rng);
    return {std::acos(std::clamp(cos_theta, -1.0, 1.0)), phi >= two_pi ? 0.0 : phi};
  }

  if (jitter_deg == 0.0) return reference;
  const double cap = jitter_deg * std::numbers::pi / 180.0;
  const double cos_a = 1.0 - u01(rng) * (1.0 - std::cos(cap));
  const double sin_a = std::sqrt(std::max(0.0, 1.0 - cos_a * cos_a));
  const double beta = two_pi * u01(rng);

  // Orthonormal frame (e1, e2) perpendicular to the reference direction n.
  const auto n = reference.unit_vector();
  const std::array<double, 3> e1{std::cos(reference.theta) * std::cos(reference.phi),
                                 std::cos(reference.theta) * std::sin(reference.phi),
                                 -std::sin(reference.theta)};
  const std::array<double, 3> e2{-std::sin(reference.phi), std::cos(reference.phi), 0.0};
  std::array<double, 3> v{};
  for (int k = 0; k < 3; ++k)
    v[k] = cos_a * n[k] + sin_a * (std::cos(beta) * e1[k] + std::sin(beta) * e2[k]);
  return Orientation::from_vector(v[0], v[1], v[2]);
}

/// Angle between two orientations in radians.
inline double angular_distance(const Orientation& a, const Orientation& b) {
  const auto u = a.unit_vector();
  const auto v = b.unit_vector();
  const double d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  return std::acos(std::clamp(d, -1.0, 1.0));
}

/// Real spherical harmonics Y_lm for l <= 2 in the order
/// (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2).
inline std::array<double, 9> real_sph_harm_l2(const Orientation& o) {
  const auto [x, y, z] = o.unit_vector();
  return {0.28209479177387814,
          0.4886025119029199 * y,
          0.4886025119029199 * z,
          0.4886025119029199 * x,
          1.0925484305920792 * x * y,
          1.0925484305920792 * y * z,
          0.31539156525252005 * (3.0 * z * z - 1.0),
          1.0925484305920792 * x * z,
          0.5462742152960396 * (x * x - y * y)};
}

}  // namespace spectranet::sim
