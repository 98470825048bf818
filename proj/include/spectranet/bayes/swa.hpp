#pragma once

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "spectranet/autodiff/checkpoint.hpp"
#include "spectranet/core/error.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/model/parameter_vector.hpp"

namespace spectranet::bayes {

using model::ParameterVector;

/// Running arithmetic mean of collected checkpoints.
struct SwaState {
  ParameterVector mean;
  std::size_t n_collected = 0;
};

/// mean <- (mean*n + checkpoint)/(n+1)
inline void swa_update(SwaState& s, const ParameterVector& checkpoint) {
  if (s.n_collected == 0) {
    s.mean = checkpoint;
    s.n_collected = 1;
    return;
  }
  model::require_compatible(s.mean, checkpoint, "swa_update");
  const double n = static_cast<double>(s.n_collected);
  for (std::size_t i = 0; i < s.mean.size(); ++i)
    s.mean.values[i] = (s.mean.values[i] * n + checkpoint.values[i]) / (n + 1.0);
  ++s.n_collected;
}

/// Diagonal plus low-rank Gaussian over weights: first and second moments of the
/// collected checkpoints and the last `rank` deviations from the running mean.
struct SwagState {
  ParameterVector mean;
  ParameterVector second_moment;
  std::deque<std::vector<double>> deviations;
  std::size_t rank = 20;
  std::size_t n_collected = 0;

  /// second_moment - mean^2, clipped at zero.
  [[nodiscard]] std::vector<double> diag_variance() const {
    std::vector<double> v(mean.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = std::max(0.0, second_moment.values[i] - mean.values[i] * mean.values[i]);
    return v;
  }
};

inline void swag_update(SwagState& s, const ParameterVector& checkpoint) {
  if (s.rank == 0) throw ConfigError("SWAG rank must be >= 1");
  if (s.n_collected == 0) {
    s.mean = checkpoint;
    s.second_moment = checkpoint;
    for (double& v : s.second_moment.values) v *= v;
  } else {
    model::require_compatible(s.mean, checkpoint, "swag_update");
    const double n = static_cast<double>(s.n_collected);
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double x = checkpoint.values[i];
      s.mean.values[i] = (s.mean.values[i] * n + x) / (n + 1.0);
      s.second_moment.values[i] = (s.second_moment.values[i] * n + x * x) / (n + 1.0);
    }
  }
  ++s.n_collected;
  std::vector<double> dev(s.mean.size());
  for (std::size_t i = 0; i < dev.size(); ++i) dev[i] = checkpoint.values[i] - s.mean.values[i];
  s.deviations.push_back(std::move(dev));
  while (s.deviations.size() > s.rank) s.deviations.pop_front();
}

/// theta = mean + scale * (sqrt(diag)/sqrt(2) * z1 + D z2 / sqrt(2(K-1))), with K the
/// number of stored deviation columns. K = 1 leaves only the diagonal term.
inline ParameterVector swag_sample(const SwagState& s, double scale, Rng& rng) {
  if (s.n_collected < 2) throw ConfigError("SWAG sampling needs at least 2 collected checkpoints");
  if (s.deviations.empty()) throw ConfigError("SWAG state holds no deviation columns");
  if (!(scale >= 0.0)) throw ConfigError("SWAG scale must be >= 0");
  ParameterVector out = s.mean;
  if (scale == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto var = s.diag_variance();
  const std::size_t d = out.size();
  const std::size_t k = s.deviations.size();
  for (std::size_t i = 0; i < d; ++i) out.values[i] += scale * std::sqrt(var[i] / 2.0) * normal(rng);
  if (k > 1) {
    const double c = scale / std::sqrt(2.0 * static_cast<double>(k - 1));
    for (const auto& col : s.deviations) {
      const double z = normal(rng);
      for (std::size_t i = 0; i < d; ++i) out.values[i] += c * col[i] * z;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: checkpoint container with named moment and deviation tensors.

inline ad::Checkpoint swag_to_checkpoint(const SwagState& s, const nlohmann::json& model_config) {
  ad::Checkpoint ck;
  ck.header["model"] = model_config;
  ck.header["swag"] = {{"rank", s.rank}, {"n_collected", s.n_collected}, {"n_deviations", s.deviations.size()}};
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& e : s.mean.layout->entries) layout.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  ck.header["layout"] = layout;
  const int d = static_cast<int>(s.mean.size());
  auto f32 = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
  ck.add("swag.mean", {d}, f32(s.mean.values));
  ck.add("swag.second_moment", {d}, f32(s.second_moment.values));
  ck.add("swag.diag_variance", {d}, f32(s.diag_variance()));
  for (std::size_t k = 0; k < s.deviations.size(); ++k) {
    char name[48];
    std::snprintf(name, sizeof name, "swag.deviation.%02zu", k);
    ck.add(name, {d}, f32(s.deviations[k]));
  }
  return ck;
}

inline SwagState swag_from_checkpoint(const ad::Checkpoint& ck) {
  if (!ck.header.contains("swag") || !ck.header.contains("layout")) throw CheckpointError("not a SWAG state file");
  auto layout = std::make_shared<model::ParameterLayout>();
  for (const auto& e : ck.header.at("layout")) {
    layout->entries.push_back({e.at("name").get<std::string>(), e.at("shape").get<ad::Shape>(), e.at("offset").get<std::size_t>()});
    layout->total += ad::numel(layout->entries.back().shape);
  }
  SwagState s;
  s.rank = ck.header["swag"].at("rank").get<std::size_t>();
  s.n_collected = ck.header["swag"].at("n_collected").get<std::size_t>();
  auto f64 = [&](const std::string& name) {
    const auto& t = ck.at(name);
    if (t.data.size() != layout->total) throw CheckpointError("SWAG tensor '" + name + "' has the wrong length");
    return std::vector<double>(t.data.begin(), t.data.end());
  };
  s.mean = {layout, f64("swag.mean")};
  const auto var = f64("swag.diag_variance");
  s.second_moment = {layout, std::vector<double>(layout->total)};
  for (std::size_t i = 0; i < var.size(); ++i) s.second_moment.values[i] = var[i] + s.mean.values[i] * s.mean.values[i];
  const auto nd = ck.header["swag"].at("n_deviations").get<std::size_t>();
  for (std::size_t k = 0; k < nd; ++k) {
    char name[48];
    std::snprintf(name, sizeof name, "swag.deviation.%02zu", k);
    s.deviations.push_back(f64(name));
  }
  return s;
}

}  // namespace spectranet::bayes
