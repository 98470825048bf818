#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "spectranet/autodiff/layers.hpp"
#include "spectranet/autodiff/optimizer.hpp"
#include "spectranet/bayes/ensemble.hpp"
#include "spectranet/bayes/swa.hpp"
#include "spectranet/core/log.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/model/backbone.hpp"
#include "spectranet/model/labeled_set.hpp"
#include "spectranet/runner/config.hpp"

namespace spectranet::runner {

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  model::Model<float> final_model;  // last iterate with recomputed batchnorm buffers: the point estimate
  bayes::SwaState swa;
  bayes::SwagState swag;
  std::vector<EpochStats> history;
};

/// Cosine decay from lr to swa_lr over the pre-collection epochs, then constant
/// swa_lr through the collection window. `progress` counts epochs (fractional).
inline double learning_rate(const TrainingConfig& t, double progress) {
  const double decay_epochs = static_cast<double>(t.epochs - t.swa_epochs());
  if (decay_epochs <= 0.0 || progress >= decay_epochs) return t.swa_lr;
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * progress / decay_epochs));
  return t.swa_lr + (t.lr - t.swa_lr) * c;
}

/// Trains one ensemble member. Seeds for initialization, shuffling and dropout
/// derive from (training.seed, member), so members are independent and the run
/// is reproducible regardless of how members are scheduled.
inline TrainResult train_member(const ExperimentConfig& cfg, const model::LabeledSet& train, std::size_t member) {
  const auto& t = cfg.training;
  if (train.size() < 2) throw DataError("training split needs at least 2 frames");
  const std::uint64_t base = derive_seed(t.seed, stream::model_init, member);
  TrainResult res{model::Model<float>(cfg.backbone, base), {}, {}, {}};
  auto& m = res.final_model;
  m.reseed_dropout(derive_seed(t.seed, stream::dropout, member));
  res.swag.rank = cfg.marginalization.swag_rank;

  ad::SgdOptimizer<float> opt(m.parameters());
  const std::size_t collect_from = t.epochs - t.swa_epochs();
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < t.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(t.seed, stream::shuffle, (static_cast<std::uint64_t>(member) << 32) | epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const auto batches = model::sequential_batches(order.size(), t.batch_size);
    double loss_sum = 0.0, correct = 0.0, lr = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<std::size_t> idx(batches[b].size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = order[batches[b][i]];
      const auto labels = train.batch_labels(idx);
      ad::Tape<float> tape;
      auto logits = m.forward(&tape, train.batch<float>(idx), model::ForwardMode::train);
      auto loss = ad::softmax_xent(&tape, logits, std::span<const int>(labels));
      const double lv = static_cast<double>(loss->values[0]);
      if (!std::isfinite(lv))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      opt.zero_grad();
      tape.backward(loss);
      lr = learning_rate(t, static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(batches.size()));
      opt.step({lr, t.momentum, t.weight_decay});
      loss_sum += lv * static_cast<double>(idx.size());
      const int c = logits->dim(1);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const float* row = logits->values.data() + i * c;
        if (std::max_element(row, row + c) - row == labels[i]) correct += 1.0;
      }
    }
    EpochStats st{epoch, lr, loss_sum / static_cast<double>(train.size()), correct / static_cast<double>(train.size())};
    res.history.push_back(st);
    log::debug("member " + std::to_string(member) + " epoch " + std::to_string(epoch) + " lr " + std::to_string(lr) +
               " loss " + std::to_string(st.loss) + " acc " + std::to_string(st.accuracy));
    if (epoch >= collect_from) {
      const auto theta = m.flatten();
      bayes::swa_update(res.swa, theta);
      bayes::swag_update(res.swag, theta);
    }
  }
  bayes::bn_refresh(m, train, t.batch_size);
  log::info("member " + std::to_string(member) + " trained: final loss " + std::to_string(res.history.back().loss) +
            ", train acc " + std::to_string(res.history.back().accuracy));
  return res;
}

/// The SWA-mean model with batchnorm buffers recomputed on `train`.
inline model::Model<float> swa_model(const model::Model<float>& like, const bayes::SwaState& swa,
                                     const model::LabeledSet& train, std::size_t batch_size) {
  if (swa.n_collected == 0) throw TrainingError("no SWA checkpoints were collected");
  model::Model<float> m = like;
  m.unflatten(swa.mean);
  bayes::bn_refresh(m, train, batch_size);
  return m;
}

}  // namespace spectranet::runner
