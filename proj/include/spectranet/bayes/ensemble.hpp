#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/bayes/predictive.hpp"
#include "spectranet/bayes/swa.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/model/backbone.hpp"
#include "spectranet/model/labeled_set.hpp"
#include "spectranet/sim/frame.hpp"

namespace spectranet::bayes {

using model::ForwardMode;
using model::LabeledSet;
using model::Model;

/// Logits for every item of `set`, one forward pass per batch.
template <class T>
std::vector<std::vector<double>> predict_logits(Model<T>& m, const LabeledSet& set, ForwardMode mode,
                                                std::size_t batch_size = 64) {
  std::vector<std::vector<double>> out;
  out.reserve(set.size());
  for (std::size_t s = 0; s < set.size(); s += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = s; i < std::min(set.size(), s + batch_size); ++i) idx.push_back(i);
    auto logits = m.forward(nullptr, set.batch<T>(idx), mode);
    const int c = logits->dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(c));
      for (int k = 0; k < c; ++k) row[static_cast<std::size_t>(k)] = static_cast<double>(logits->values[i * c + k]);
      out.push_back(std::move(row));
    }
  }
  return out;
}

/// Recomputes batchnorm running buffers for the current weights: one sweep over
/// `train` in fixed order, batch statistics averaged cumulatively, no dropout and
/// no parameter updates.
template <class T>
void bn_refresh(Model<T>& m, const LabeledSet& train, std::size_t batch_size = 64) {
  if (train.empty()) throw DataError("bn_refresh: empty training loader");
  if (train.size() < 2) throw DataError("bn_refresh needs at least 2 training frames");
  auto bns = m.batchnorms();
  for (auto& [name, bn] : bns) bn->begin_cumulative();
  for (const auto& idx : model::sequential_batches(train.size(), batch_size))
    (void)m.forward(nullptr, train.batch<T>(idx), ForwardMode::bn_refresh);
  for (auto& [name, bn] : bns) bn->end_cumulative();
  m.mark_batchnorm_fresh(true);
}

/// n_samples stochastic passes with dropout active and batchnorm in eval statistics.
template <class T>
std::vector<PredictiveDistribution> mc_dropout_predict(Model<T>& m, const LabeledSet& set, std::size_t n_samples,
                                                       std::uint64_t seed, std::size_t batch_size = 64) {
  if (n_samples == 0) throw ConfigError("mc_dropout_predict needs n_samples >= 1");
  std::vector<PredictiveDistribution> out(set.size());
  for (auto& d : out) d.source = PredictiveSource::dropout;
  m.reseed_dropout(seed);
  for (std::size_t s = 0; s < n_samples; ++s) {
    auto logits = predict_logits(m, set, ForwardMode::mc_infer, batch_size);
    for (std::size_t i = 0; i < set.size(); ++i) out[i].add_logits(std::move(logits[i]));
  }
  return out;
}

template <class T>
PredictiveDistribution mc_dropout_predict(Model<T>& m, const sim::Frame& frame, std::size_t n_samples = 100,
                                          std::uint64_t seed = 0) {
  LabeledSet one;
  one.add(frame, 0);
  return mc_dropout_predict(m, one, n_samples, seed).front();
}

/// One eval pass per member; members trained with weight averaging must have
/// refreshed batchnorm buffers.
template <class T>
std::vector<PredictiveDistribution> ensemble_predict(std::span<Model<T>* const> members, const LabeledSet& set,
                                                     PredictiveSource source, std::size_t batch_size = 64) {
  if (members.empty()) throw ConfigError("ensemble_predict needs at least one member");
  for (std::size_t k = 0; k < members.size(); ++k)
    if (!members[k]->batchnorm_fresh())
      throw ConfigError("ensemble member " + std::to_string(k) +
                        " has averaged weights with stale batchnorm buffers; run bn_refresh first");
  std::vector<PredictiveDistribution> out(set.size());
  for (auto& d : out) d.source = source;
  for (auto* m : members) {
    auto logits = predict_logits(*m, set, ForwardMode::eval, batch_size);
    for (std::size_t i = 0; i < set.size(); ++i) out[i].add_logits(std::move(logits[i]));
  }
  return out;
}

/// S posterior draws from one SWAG state; each draw gets its own batchnorm refresh.
template <class T>
std::vector<PredictiveDistribution> swag_predict(const SwagState& state, const Model<T>& base, const LabeledSet& train,
                                                 const LabeledSet& set, std::size_t n_samples, double scale,
                                                 std::uint64_t seed, std::size_t batch_size = 64) {
  if (n_samples == 0) throw ConfigError("swag_predict needs n_samples >= 1");
  Rng rng(seed);
  Model<T> m = base;
  std::vector<PredictiveDistribution> out(set.size());
  for (auto& d : out) d.source = PredictiveSource::swag;
  for (std::size_t s = 0; s < n_samples; ++s) {
    m.unflatten(swag_sample(state, scale, rng));
    bn_refresh(m, train, batch_size);
    auto logits = predict_logits(m, set, ForwardMode::eval, batch_size);
    for (std::size_t i = 0; i < set.size(); ++i) out[i].add_logits(std::move(logits[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble descriptor: member state files plus sampling settings.

struct EnsembleDescriptor {
  PredictiveSource method = PredictiveSource::multi_swa;
  std::vector<std::string> member_checkpoints;  // relative to the descriptor
  std::vector<std::string> member_swag_states;
  double swag_scale = 0.25;
  std::size_t samples_per_model = 20;
};

inline nlohmann::json to_json(const EnsembleDescriptor& d) {
  return {{"method", to_string(d.method)},
          {"member_checkpoints", d.member_checkpoints},
          {"member_swag_states", d.member_swag_states},
          {"swag_scale", d.swag_scale},
          {"samples_per_model", d.samples_per_model}};
}

inline EnsembleDescriptor descriptor_from_json(const nlohmann::json& j) {
  EnsembleDescriptor d;
  d.method = parse_source(j.at("method").get<std::string>());
  d.member_checkpoints = j.at("member_checkpoints").get<std::vector<std::string>>();
  d.member_swag_states = j.value("member_swag_states", std::vector<std::string>{});
  d.swag_scale = j.value("swag_scale", 0.25);
  d.samples_per_model = j.value("samples_per_model", std::size_t{20});
  return d;
}

inline void save_descriptor(const std::filesystem::path& p, const EnsembleDescriptor& d) {
  std::ofstream os(p);
  if (!os) throw CheckpointError("cannot write '" + p.string() + "'");
  os << to_json(d).dump(2) << '\n';
}

inline EnsembleDescriptor load_descriptor(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw MissingArtifactError(p.string(), "train");
  try {
    return descriptor_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(p.string() + ": " + e.what());
  }
}

}  // namespace spectranet::bayes
