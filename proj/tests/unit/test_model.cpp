#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "spectranet/autodiff/optimizer.hpp"
#include "spectranet/model/backbone.hpp"
#include "spectranet/model/labeled_set.hpp"

using namespace spectranet;
using namespace spectranet::model;

namespace {

std::vector<sim::Frame> random_frames(std::size_t n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(100.0, 15.0);
  std::vector<sim::Frame> out;
  for (std::size_t i = 0; i < n; ++i) {
    sim::Frame f(h, w);
    for (auto& p : f.pixels) p = z(rng);
    out.push_back(std::move(f));
  }
  return out;
}

ad::Var<float> batch_of(const std::vector<sim::Frame>& frames) {
  std::vector<const sim::Frame*> ptr;
  for (const auto& f : frames) ptr.push_back(&f);
  return make_batch<float>(ptr);
}

BackboneConfig small_config() {
  BackboneConfig c;
  c.stage_widths = {4, 8};
  c.blocks_per_stage = {1, 1};
  c.n_classes = 3;
  return c;
}

}  // namespace

TEST(Model, DeskParameterCountIsPinned) {
  Model<float> m(BackboneConfig{}, 1);
  EXPECT_EQ(m.parameter_count(), 180249u);
  EXPECT_EQ(m.flatten().size(), 180249u);
}

TEST(Model, StemOutputShapes) {
  BackboneConfig desk;
  EXPECT_EQ(desk.stem_output(), (std::array<int, 2>{32, 28}));
  BackboneConfig paper;
  paper.input_height = 200;
  paper.input_width = 1340;
  EXPECT_EQ(paper.stem_output(), (std::array<int, 2>{100, 112}));
}

TEST(Model, DeskForwardGivesBatchByClasses) {
  Model<float> m(BackboneConfig{}, 2);
  const auto y = m.forward(nullptr, batch_of(random_frames(3, 64, 336, 1)), ForwardMode::eval);
  EXPECT_EQ(y->shape, (ad::Shape{3, 9}));
  EXPECT_THROW(m.forward(nullptr, batch_of(random_frames(2, 32, 336, 1)), ForwardMode::eval), ShapeError);
}

TEST(Model, BuildIsDeterministicUnderSeed) {
  Model<float> a(small_config(), 7), b(small_config(), 7), c(small_config(), 8);
  EXPECT_EQ(a.flatten().values, b.flatten().values);
  EXPECT_NE(a.flatten().values, c.flatten().values);
}

TEST(Model, EvalIsDeterministicAndMcRateZeroMatchesEval) {
  auto cfg = small_config();
  cfg.dropout_rate = 0.0;
  Model<float> m(cfg, 3);
  const auto x = batch_of(random_frames(4, 64, 336, 2));
  const auto e1 = m.forward(nullptr, x, ForwardMode::eval)->values;
  EXPECT_EQ(e1, m.forward(nullptr, x, ForwardMode::eval)->values);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(m.forward(nullptr, x, ForwardMode::mc_infer)->values, e1);
}

TEST(Model, McInferMeanSoftmaxIsNormalized) {
  Model<float> m(small_config(), 4);
  m.reseed_dropout(11);
  const auto x = batch_of(random_frames(2, 64, 336, 3));
  std::vector<double> mean(6, 0.0);
  bool varied = false;
  std::vector<float> first;
  for (int s = 0; s < 100; ++s) {
    const auto y = m.forward(nullptr, x, ForwardMode::mc_infer);
    if (s == 0) first = y->values;
    varied = varied || y->values != first;
    const auto p = ad::softmax_rows(*y);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) mean[i * 3 + j] += p[i][j] / 100.0;
  }
  EXPECT_TRUE(varied);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(mean[i * 3] + mean[i * 3 + 1] + mean[i * 3 + 2], 1.0, 1e-6);
}

TEST(Model, FlattenRoundTripPreservesLogits) {
  Model<float> a(small_config(), 5), b(small_config(), 6);
  const auto x = batch_of(random_frames(3, 64, 336, 4));
  b.unflatten(a.flatten());
  EXPECT_EQ(a.flatten().values, b.flatten().values);
  // Batchnorm buffers are not part of the parameter vector; copy them through a checkpoint.
  auto c = Model<float>::from_checkpoint(a.to_checkpoint());
  EXPECT_EQ(c.forward(nullptr, x, ForwardMode::eval)->values,
            a.forward(nullptr, x, ForwardMode::eval)->values);
  auto wrong = small_config();
  wrong.stage_widths = {4, 4};
  Model<float> other(wrong, 1);
  EXPECT_THROW(other.unflatten(a.flatten()), CheckpointError);
}

TEST(Model, AveragedWeightsGiveFiniteLogits) {
  Model<float> a(small_config(), 9), b(small_config(), 10);
  auto v = a.flatten();
  const auto w = b.flatten();
  for (std::size_t i = 0; i < v.size(); ++i) v.values[i] = 0.5 * (v.values[i] + w.values[i]);
  a.unflatten(v);
  EXPECT_FALSE(a.batchnorm_fresh());
  for (float l : a.forward(nullptr, batch_of(random_frames(2, 64, 336, 5)), ForwardMode::eval)->values)
    EXPECT_TRUE(std::isfinite(l));
}

TEST(Model, AffineInputInvariance) {
  Model<float> m(small_config(), 12);
  const auto frames = random_frames(3, 64, 336, 6);
  const auto base = m.forward(nullptr, batch_of(frames), ForwardMode::eval)->values;
  for (auto [a, b] : {std::pair{2.0, 0.0}, std::pair{0.01, 500.0}, std::pair{37.0, -100.0}}) {
    auto g = frames;
    for (auto& f : g)
      for (auto& p : f.pixels) p = a * p + b;
    const auto y = m.forward(nullptr, batch_of(g), ForwardMode::eval)->values;
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], base[i], 1e-5 * std::max(1.0f, std::abs(base[i])));
  }
}

TEST(Model, CopyIsIndependent) {
  Model<float> a(small_config(), 13);
  Model<float> b = a;
  auto v = b.flatten();
  v.values[0] += 1.0;
  b.unflatten(v);
  EXPECT_NE(a.flatten().values[0], b.flatten().values[0]);
}

TEST(Model, LearnsSeparableToyProblem) {
  // Bright row band vs bright column band: a few SGD steps separate them.
  auto cfg = small_config();
  cfg.n_classes = 2;
  Model<float> m(cfg, 14);
  LabeledSet set;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0, 1);
  for (int i = 0; i < 32; ++i) {
    sim::Frame f(64, 336);
    for (auto& p : f.pixels) p = 10 + z(rng);
    const int label = i % 2;
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 336; ++c)
        if (label ? (c / 42) % 2 == 0 : (r / 8) % 2 == 0) f.at(r, c) += 20;
    set.add(f, label);
  }
  ad::SgdOptimizer<float> opt(m.parameters());
  std::vector<std::size_t> idx(32);
  std::iota(idx.begin(), idx.end(), 0);
  const auto x = set.batch(idx);
  const auto lab = set.batch_labels(idx);
  double first = 0, last = 0;
  for (int step = 0; step < 30; ++step) {
    ad::Tape<float> tape;
    opt.zero_grad();
    auto loss = ad::softmax_xent<float>(&tape, m.forward(&tape, x, ForwardMode::train), lab);
    tape.backward(loss);
    opt.step({0.05, 0.9, 0.0});
    (step == 0 ? first : last) = loss->values[0];
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(LabeledSet, BatchesAndSingletonMerge) {
  const auto b = sequential_batches(9, 4);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].size(), 5u);
  EXPECT_EQ(sequential_batches(8, 4).size(), 2u);
  EXPECT_THROW(sequential_batches(3, 0), ConfigError);
  LabeledSet s;
  s.add(sim::Frame(2, 2, 1.0), 0);
  EXPECT_THROW(s.add(sim::Frame(3, 2, 1.0), 1), ShapeError);
}
