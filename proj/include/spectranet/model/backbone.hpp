#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spectranet/autodiff/checkpoint.hpp"
#include "spectranet/autodiff/conv2d.hpp"
#include "spectranet/autodiff/layers.hpp"
#include "spectranet/autodiff/optimizer.hpp"
#include "spectranet/autodiff/tensor.hpp"
#include "spectranet/core/error.hpp"
#include "spectranet/core/rng.hpp"
#include "spectranet/model/parameter_vector.hpp"
#include "spectranet/sim/frame.hpp"

namespace spectranet::model {

struct BackboneConfig {
  std::array<int, 2> stem_kernel{7, 49};
  std::array<int, 2> stem_stride{2, 12};
  std::array<int, 2> stem_padding{3, 24};
  std::vector<int> stage_widths{16, 32, 64};
  std::vector<int> blocks_per_stage{2, 2, 2};
  double dropout_rate = 0.10;
  int n_classes = 9;
  int input_height = 64;
  int input_width = 336;

  void validate() const {
    if (stage_widths.empty() || stage_widths.size() != blocks_per_stage.size())
      throw ConfigError("stage_widths and blocks_per_stage must be nonempty and of equal length");
    for (int w : stage_widths)
      if (w <= 0) throw ConfigError("stage widths must be positive");
    for (int b : blocks_per_stage)
      if (b <= 0) throw ConfigError("blocks per stage must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate <= 0.20)) throw ConfigError("dropout_rate must be in [0, 0.20]");
    if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
    if (input_height <= 0 || input_width <= 0) throw ConfigError("input dimensions must be positive");
  }

  /// Spatial size after the stem convolution.
  [[nodiscard]] std::array<int, 2> stem_output() const {
    return {ad::conv_out_dim(input_height, stem_kernel[0], stem_stride[0], stem_padding[0]),
            ad::conv_out_dim(input_width, stem_kernel[1], stem_stride[1], stem_padding[1])};
  }
};

inline nlohmann::json to_json(const BackboneConfig& c) {
  return {{"stem_kernel", c.stem_kernel},       {"stem_stride", c.stem_stride},
          {"stem_padding", c.stem_padding},     {"stage_widths", c.stage_widths},
          {"blocks_per_stage", c.blocks_per_stage}, {"dropout_rate", c.dropout_rate},
          {"n_classes", c.n_classes},           {"input_height", c.input_height},
          {"input_width", c.input_width}};
}

inline BackboneConfig backbone_from_json(const nlohmann::json& j, BackboneConfig c = {}) {
  try {
    if (j.contains("stem_kernel")) c.stem_kernel = j.at("stem_kernel").get<std::array<int, 2>>();
    if (j.contains("stem_stride")) c.stem_stride = j.at("stem_stride").get<std::array<int, 2>>();
    if (j.contains("stem_padding")) c.stem_padding = j.at("stem_padding").get<std::array<int, 2>>();
    c.stage_widths = j.value("stage_widths", c.stage_widths);
    c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.input_height = j.value("input_height", c.input_height);
    c.input_width = j.value("input_width", c.input_width);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("backbone: ") + e.what());
  }
  c.validate();
  return c;
}

enum class ForwardMode {
  train,       // batch statistics, dropout active
  eval,        // running statistics, no dropout
  mc_infer,    // running statistics, dropout active
  bn_refresh,  // batch statistics feeding the running buffers, no dropout
};

/// Per-frame standardization: subtract the frame mean, divide by its standard
/// deviation (1 for constant frames).
template <class T>
void standardize_into(std::span<const double> pixels, std::span<T> out) {
  double s = 0.0;
  for (double p : pixels) s += p;
  const double mean = s / static_cast<double>(pixels.size());
  double s2 = 0.0;
  for (double p : pixels) s2 += (p - mean) * (p - mean);
  double sd = std::sqrt(s2 / static_cast<double>(pixels.size()));
  if (!(sd > 0.0)) sd = 1.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = static_cast<T>((pixels[i] - mean) / sd);
}

template <class T>
ad::Var<T> make_batch(std::span<const sim::Frame* const> frames) {
  if (frames.empty()) throw ShapeError("empty batch");
  const int h = static_cast<int>(frames[0]->height), w = static_cast<int>(frames[0]->width);
  auto x = ad::make_var<T>({static_cast<int>(frames.size()), 1, h, w});
  const std::size_t stride = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (static_cast<int>(frames[i]->height) != h || static_cast<int>(frames[i]->width) != w)
      throw ShapeError("frames in a batch must share dimensions");
    standardize_into<T>(frames[i]->pixels, std::span<T>(x->values.data() + i * stride, stride));
  }
  return x;
}

/// Wide-stem residual network: stem conv (7x49, stride 2x12) -> BN -> ReLU ->
/// basic-block stages (stride 2 between stages, 1x1 projection skips) with dropout
/// after each block -> global average pool -> dense head.
template <class T>
class Model {
 public:
  Model(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    build();
    initialize(seed);
  }

  Model(const Model& o) : cfg_(o.cfg_) {
    build();
    copy_state_from(o);
  }
  Model& operator=(const Model& o) {
    if (this != &o) {
      cfg_ = o.cfg_;
      build();
      copy_state_from(o);
    }
    return *this;
  }
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  [[nodiscard]] const BackboneConfig& config() const { return cfg_; }

  /// Logits (N x n_classes) for a standardized N x 1 x H x W batch.
  ad::Var<T> forward(ad::Tape<T>* tape, const ad::Var<T>& x, ForwardMode mode) {
    if (x->shape.size() != 4 || x->dim(1) != 1 || x->dim(2) != cfg_.input_height || x->dim(3) != cfg_.input_width)
      throw ShapeError("model expects N x 1 x " + std::to_string(cfg_.input_height) + " x " +
                       std::to_string(cfg_.input_width) + " input, got " + ad::to_string(x->shape));
    const ad::BnMode bn = (mode == ForwardMode::train || mode == ForwardMode::bn_refresh) ? ad::BnMode::train
                                                                                         : ad::BnMode::eval;
    const ad::DropoutMode dm = mode == ForwardMode::train      ? ad::DropoutMode::train
                               : mode == ForwardMode::mc_infer ? ad::DropoutMode::mc_infer
                                                               : ad::DropoutMode::off;
    auto h = ad::conv2d(tape, x, stem_.weight, stem_.geom);
    h = ad::relu(tape, ad::batchnorm(tape, h, stem_bn_, bn));
    for (auto& b : blocks_) {
      auto y = ad::relu(tape, ad::batchnorm(tape, ad::conv2d(tape, h, b.conv1.weight, b.conv1.geom), b.bn1, bn));
      y = ad::batchnorm(tape, ad::conv2d(tape, y, b.conv2.weight, b.conv2.geom), b.bn2, bn);
      auto skip = h;
      if (b.proj) skip = ad::batchnorm(tape, ad::conv2d(tape, h, b.proj->weight, b.proj->geom), *b.proj_bn, bn);
      h = ad::relu(tape, ad::add(tape, y, skip));
      h = ad::dropout(tape, h, cfg_.dropout_rate, dm, dropout_rng_);
    }
    return ad::dense(tape, ad::global_avg_pool(tape, h), head_w_, head_b_);
  }

  [[nodiscard]] std::vector<ad::ParamRef<T>> parameters() const { return params_; }

  [[nodiscard]] std::vector<std::pair<std::string, ad::BatchNormState<T>*>> batchnorms() {
    std::vector<std::pair<std::string, ad::BatchNormState<T>*>> out;
    out.emplace_back("stem.bn", &stem_bn_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      out.emplace_back(blocks_[i].name + ".bn1", &blocks_[i].bn1);
      out.emplace_back(blocks_[i].name + ".bn2", &blocks_[i].bn2);
      if (blocks_[i].proj_bn) out.emplace_back(blocks_[i].name + ".proj_bn", &*blocks_[i].proj_bn);
    }
    return out;
  }

  [[nodiscard]] std::size_t parameter_count() const { return layout_->total; }
  [[nodiscard]] const std::shared_ptr<const ParameterLayout>& layout() const { return layout_; }

  [[nodiscard]] ParameterVector flatten() const {
    ParameterVector v{layout_, std::vector<double>(layout_->total)};
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = params_[i].var->values;
      std::copy(src.begin(), src.end(), v.values.begin() + static_cast<std::ptrdiff_t>(layout_->entries[i].offset));
    }
    return v;
  }

  /// Loads trainable weights. Batchnorm buffers no longer match the weights, so
  /// the model is marked stale until bn_refresh runs.
  void unflatten(const ParameterVector& v) {
    if (!v.layout || !(*v.layout == *layout_) || v.size() != layout_->total)
      throw CheckpointError("parameter vector layout does not match this model");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& dst = params_[i].var->values;
      const auto off = static_cast<std::ptrdiff_t>(layout_->entries[i].offset);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(v.values[static_cast<std::size_t>(off) + k]);
    }
    bn_fresh_ = false;
  }

  [[nodiscard]] bool batchnorm_fresh() const { return bn_fresh_; }
  void mark_batchnorm_fresh(bool fresh) { bn_fresh_ = fresh; }

  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }
  [[nodiscard]] Rng& dropout_rng() { return dropout_rng_; }

  /// Weights and batchnorm buffers; the header carries the backbone config.
  [[nodiscard]] ad::Checkpoint to_checkpoint() const {
    ad::Checkpoint ck;
    ck.header["model"] = to_json(cfg_);
    ck.header["batchnorm_fresh"] = bn_fresh_;
    for (const auto& p : params_) ck.add(p.name, p.var->shape, std::vector<float>(p.var->values.begin(), p.var->values.end()));
    auto* self = const_cast<Model*>(this);
    for (auto& [name, bn] : self->batchnorms()) {
      const int c = bn->channels();
      ck.add(name + ".running_mean", {c}, std::vector<float>(bn->running_mean.begin(), bn->running_mean.end()));
      ck.add(name + ".running_var", {c}, std::vector<float>(bn->running_var.begin(), bn->running_var.end()));
    }
    return ck;
  }

  static Model from_checkpoint(const ad::Checkpoint& ck) {
    if (!ck.header.contains("model")) throw CheckpointError("checkpoint has no model config");
    Model m(backbone_from_json(ck.header.at("model")), 0);
    for (auto& p : m.params_) {
      const auto& t = ck.at(p.name);
      if (t.shape != p.var->shape) throw CheckpointError("shape mismatch for '" + p.name + "'");
      std::copy(t.data.begin(), t.data.end(), p.var->values.begin());
    }
    for (auto& [name, bn] : m.batchnorms()) {
      const auto& rm = ck.at(name + ".running_mean");
      const auto& rv = ck.at(name + ".running_var");
      std::copy(rm.data.begin(), rm.data.end(), bn->running_mean.begin());
      std::copy(rv.data.begin(), rv.data.end(), bn->running_var.begin());
    }
    m.bn_fresh_ = ck.header.value("batchnorm_fresh", true);
    return m;
  }

 private:
  struct Conv {
    ad::Var<T> weight;
    ad::ConvGeometry geom;
  };
  struct Block {
    std::string name;
    Conv conv1, conv2;
    ad::BatchNormState<T> bn1, bn2;
    std::optional<Conv> proj;
    std::optional<ad::BatchNormState<T>> proj_bn;
  };

  static Conv make_conv(int out, int in, int kh, int kw, ad::ConvGeometry g) {
    return {ad::make_var<T>({out, in, kh, kw}, T(0), true), g};
  }

  void build() {
    blocks_.clear();
    params_.clear();
    const auto stem_hw = cfg_.stem_output();  // throws ShapeError when the input is too small
    (void)stem_hw;
    stem_ = make_conv(cfg_.stage_widths[0], 1, cfg_.stem_kernel[0], cfg_.stem_kernel[1],
                      {cfg_.stem_stride[0], cfg_.stem_stride[1], cfg_.stem_padding[0], cfg_.stem_padding[1]});
    stem_bn_ = ad::BatchNormState<T>(cfg_.stage_widths[0]);
    params_.push_back({"stem.conv.weight", stem_.weight, true});
    params_.push_back({"stem.bn.gamma", stem_bn_.gamma, false});
    params_.push_back({"stem.bn.beta", stem_bn_.beta, false});

    int in = cfg_.stage_widths[0];
    for (std::size_t s = 0; s < cfg_.stage_widths.size(); ++s) {
      const int width = cfg_.stage_widths[s];
      for (int b = 0; b < cfg_.blocks_per_stage[s]; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        Block blk;
        blk.name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
        blk.conv1 = make_conv(width, in, 3, 3, {stride, stride, 1, 1});
        blk.bn1 = ad::BatchNormState<T>(width);
        blk.conv2 = make_conv(width, width, 3, 3, {1, 1, 1, 1});
        blk.bn2 = ad::BatchNormState<T>(width);
        if (stride != 1 || in != width) {
          blk.proj = make_conv(width, in, 1, 1, {stride, stride, 0, 0});
          blk.proj_bn = ad::BatchNormState<T>(width);
        }
        blocks_.push_back(std::move(blk));
        in = width;
      }
    }
    for (auto& blk : blocks_) {
      params_.push_back({blk.name + ".conv1.weight", blk.conv1.weight, true});
      params_.push_back({blk.name + ".bn1.gamma", blk.bn1.gamma, false});
      params_.push_back({blk.name + ".bn1.beta", blk.bn1.beta, false});
      params_.push_back({blk.name + ".conv2.weight", blk.conv2.weight, true});
      params_.push_back({blk.name + ".bn2.gamma", blk.bn2.gamma, false});
      params_.push_back({blk.name + ".bn2.beta", blk.bn2.beta, false});
      if (blk.proj) {
        params_.push_back({blk.name + ".proj.weight", blk.proj->weight, true});
        params_.push_back({blk.name + ".proj_bn.gamma", blk.proj_bn->gamma, false});
        params_.push_back({blk.name + ".proj_bn.beta", blk.proj_bn->beta, false});
      }
    }
    head_w_ = ad::make_var<T>({cfg_.n_classes, in}, T(0), true);
    head_b_ = ad::make_var<T>({cfg_.n_classes}, T(0), true);
    params_.push_back({"head.weight", head_w_, true});
    params_.push_back({"head.bias", head_b_, false});

    auto layout = std::make_shared<ParameterLayout>();
    for (const auto& p : params_) {
      layout->entries.push_back({p.name, p.var->shape, layout->total});
      layout->total += p.var->size();
    }
    layout_ = std::move(layout);
  }

  /// He-normal fan-in init for convolutions, uniform(+-1/sqrt(fan_in)) for the head.
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, stream::model_init));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& p : params_) {
      const auto& s = p.var->shape;
      if (s.size() == 4) {
        const double sd = std::sqrt(2.0 / static_cast<double>(s[1] * s[2] * s[3]));
        for (auto& v : p.var->values) v = static_cast<T>(sd * normal(rng));
      } else if (p.name == "head.weight") {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s[1]));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : p.var->values) v = static_cast<T>(u(rng));
      }
    }
    dropout_rng_.seed(derive_seed(seed, stream::dropout));
    bn_fresh_ = true;
  }

  void copy_state_from(const Model& o) {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].var->values = o.params_[i].var->values;
    auto mine = batchnorms();
    auto theirs = const_cast<Model&>(o).batchnorms();
    for (std::size_t i = 0; i < mine.size(); ++i) {
      mine[i].second->running_mean = theirs[i].second->running_mean;
      mine[i].second->running_var = theirs[i].second->running_var;
      mine[i].second->momentum = theirs[i].second->momentum;
      mine[i].second->epsilon = theirs[i].second->epsilon;
    }
    dropout_rng_ = o.dropout_rng_;
    bn_fresh_ = o.bn_fresh_;
  }

  BackboneConfig cfg_;
  Conv stem_;
  ad::BatchNormState<T> stem_bn_;
  std::vector<Block> blocks_;
  ad::Var<T> head_w_, head_b_;
  std::vector<ad::ParamRef<T>> params_;
  std::shared_ptr<const ParameterLayout> layout_;
  Rng dropout_rng_;
  bool bn_fresh_ = true;
};

}  // namespace spectranet::model
