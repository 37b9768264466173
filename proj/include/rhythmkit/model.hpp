// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rhythmkit/dsp.hpp"
#include "rhythmkit/face_geometry.hpp"
#include "rhythmkit/nn/adam.hpp"
#include "rhythmkit/nn/checkpoint.hpp"
#include "rhythmkit/nn/gru.hpp"
#include "rhythmkit/nn/layers.hpp"
#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/stmap.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit {

// --- losses --------------------------------------------------------------------

// Mean absolute deviation of a run of adjacent HR estimates from their mean:
// (1/T)·Σ|hr_t − hr_mean|. Needs at least 2 values.
double smooth_loss(const std::vector<double>& hrs);

// Analytic gradient of smooth_loss with the sgn(0) = 0 tie convention:
// ∂L/∂hr_t = (1/T)·(sgn(hr_t − m) − (1/T)·Σ_i sgn(hr_i − m)), the exact
// derivative including the dependence of the mean on every hr_t. Matches
// central finite differences of smooth_loss at all non-tie points.
std::vector<double> smooth_loss_grad(const std::vector<double>& hrs);

struct LossBreakdown {
  double l1 = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// L1 = mean|pred − gt|; total = L1 + λ·smooth(pred).
LossBreakdown total_loss(const std::vector<double>& pred_hrs, const std::vector<double>& gt_hrs,
                         double lambda = 100.0);

// --- model ---------------------------------------------------------------------

struct BackboneConfig {
  std::string variant = "compact";  // "compact" or "resnet18-style"
  int t_frames = 300;
  int n_blocks = 25;
  int channels = 3;

  int base_channels() const { return variant == "compact" ? 16 : 64; }
  int blocks_per_stage() const { return variant == "compact" ? 1 : 2; }
  int feature_dim() const { return base_channels() * 8; }
  void validate() const;
};

// Two 3×3 convolutions with a (projected) shortcut; the standard residual
// unit without normalization layers, which keeps backward passes exactly
// reproducible.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock(int in_ch, int out_ch, int stride_h, int stride_w)
      : conv1_(in_ch, out_ch, 3, 3, stride_h, stride_w, 1, 1),
        conv2_(out_ch, out_ch, 3, 3, 1, 1, 1, 1),
        use_proj_(stride_h != 1 || stride_w != 1 || in_ch != out_ch) {
    if (use_proj_)
      proj_ = std::make_unique<nn::Conv2d<T>>(in_ch, out_ch, 1, 1, stride_h, stride_w, 0, 0);
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (proj_) proj_->init(rng);
  }

  void collect_params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    conv1_.collect_params(prefix + ".conv1", out);
    conv2_.collect_params(prefix + ".conv2", out);
    if (proj_) proj_->collect_params(prefix + ".proj", out);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool cache = true) {
    nn::Tensor<T> main = relu1_.forward(conv1_.forward(x, cache), cache);
    main = conv2_.forward(main, cache);
    const nn::Tensor<T> skip = proj_ ? proj_->forward(x, cache) : x;
    if (!main.same_shape(skip)) throw ValidationError("residual shape mismatch");
    for (std::size_t i = 0; i < main.numel(); ++i) main.data[i] += skip.data[i];
    return relu2_.forward(main, cache);
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& grad_out) {
    const nn::Tensor<T> g_sum = relu2_.backward(grad_out);
    nn::Tensor<T> gx = proj_ ? proj_->backward(g_sum)
                             : g_sum;  // identity skip passes the gradient through
    nn::Tensor<T> g_main = conv2_.backward(g_sum);
    g_main = relu1_.backward(g_main);
    g_main = conv1_.backward(g_main);
    if (!gx.same_shape(g_main)) throw ValidationError("residual gradient shape mismatch");
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += g_main.data[i];
    return gx;
  }

  void clear_cache() {
    conv1_.clear_cache();
    conv2_.clear_cache();
    if (proj_) proj_->clear_cache();
    relu1_.clear_cache();
    relu2_.clear_cache();
  }

 private:
  nn::Conv2d<T> conv1_, conv2_;
  std::unique_ptr<nn::Conv2d<T>> proj_;
  nn::ReLU<T> relu1_, relu2_;
  bool use_proj_;
};

// Map-to-feature encoder. Input is CHW = (channels, T, n); the stem halves
// the time axis only, then four residual stages (widths base·{1,2,4,8})
// halve both axes, and global average pooling yields the feature vector.
template <typename T>
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& config)
      : config_(config),
        stem_(config.channels, config.base_channels(), 3, 3, 2, 1, 1, 1) {
    config.validate();
    int ch = config.base_channels();
    for (int stage = 0; stage < 4; ++stage) {
      const int out_ch = config.base_channels() * (1 << stage);
      for (int b = 0; b < config.blocks_per_stage(); ++b) {
        const bool downsample = b == 0;
        blocks_.emplace_back(std::make_unique<ResidualBlock<T>>(
            ch, out_ch, downsample ? 2 : 1, downsample ? 2 : 1));
        ch = out_ch;
      }
    }
  }

  const BackboneConfig& config() const { return config_; }

  void init(Rng& rng) {
    stem_.init(rng);
    for (auto& b : blocks_) b->init(rng);
  }

  void collect_params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    stem_.collect_params(prefix + ".stem", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i]->collect_params(prefix + ".block" + std::to_string(i), out);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool cache = true) {
    nn::Tensor<T> y = stem_relu_.forward(stem_.forward(x, cache), cache);
    for (auto& b : blocks_) y = b->forward(y, cache);
    return pool_.forward(y, cache);
  }

  nn::Tensor<T> backward(const nn::Tensor<T>& grad_feature) {
    nn::Tensor<T> g = pool_.backward(grad_feature);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
    return stem_.backward(stem_relu_.backward(g));
  }

  void clear_cache() {
    stem_.clear_cache();
    stem_relu_.clear_cache();
    for (auto& b : blocks_) b->clear_cache();
    pool_.clear_cache();
  }

 private:
  BackboneConfig config_;
  nn::Conv2d<T> stem_;
  nn::ReLU<T> stem_relu_;
  std::vector<std::unique_ptr<ResidualBlock<T>>> blocks_;
  nn::GlobalAvgPool<T> pool_;
};

inline constexpr int kGruHiddenDim = 64;

// The full estimator: backbone features, a scalar regression head, and an
// optional one-layer GRU whose outputs feed their own scalar head. Features
// entering the GRU are RMS-normalized (rms_normalize): the backbone has no
// normalization layers, so its output scale is unbounded during training and
// would otherwise saturate the gates. The network regresses standardized HR
// at the training frame rate; callers rescale with target_mean/std and the
// fps ratio.
template <typename T>
class RhythmNetModel {
 public:
  RhythmNetModel(const BackboneConfig& config, bool use_gru)
      : backbone_(config),
        hr_head_(config.feature_dim(), 1),
        gru_(config.feature_dim(), kGruHiddenDim),
        gru_head_(kGruHiddenDim, 1),
        use_gru_(use_gru) {}

  const BackboneConfig& config() const { return backbone_.config(); }
  bool use_gru() const { return use_gru_; }

  // Prediction metadata, persisted with the weights.
  double target_mean = 0.0;
  double target_std = 1.0;
  double fps_train = 30.0;
  int grid_rows = 5;
  int grid_cols = 5;
  ColorSpace colorspace = ColorSpace::kYuv;

  void init(Rng& rng) {
    backbone_.init(rng);
    hr_head_.init(rng);
    gru_.init(rng);
    gru_head_.init(rng);
  }

  // Only the active head's parameters take part in optimization and
  // checkpoints.
  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    backbone_.collect_params("backbone", out);
    if (use_gru_) {
      gru_.collect_params("gru", out);
      gru_head_.collect_params("gru_head", out);
    } else {
      hr_head_.collect_params("hr_head", out);
    }
    return out;
  }

  void zero_grads() {
    for (const nn::ParamRef<T>& p : params()) p.grad->zero();
  }

  Backbone<T>& backbone() { return backbone_; }
  nn::Dense<T>& hr_head() { return hr_head_; }
  nn::GruCell<T>& gru() { return gru_; }
  nn::Dense<T>& gru_head() { return gru_head_; }

  void clear_cache() {
    backbone_.clear_cache();
    hr_head_.clear_cache();
    gru_.clear_cache();
    gru_head_.clear_cache();
  }

 private:
  Backbone<T> backbone_;
  nn::Dense<T> hr_head_;
  nn::GruCell<T> gru_;
  nn::Dense<T> gru_head_;
  bool use_gru_;
};

using FloatModel = RhythmNetModel<float>;

// Map values ([0,255]) scaled to [0,1] and laid out CHW for the backbone.
template <typename T>
nn::Tensor<T> map_to_input(const SpatialTemporalMap& map) {
  nn::Tensor<T> x({map.channels, map.t_frames, map.n_blocks});
  for (int c = 0; c < map.channels; ++c)
    for (int t = 0; t < map.t_frames; ++t)
      for (int b = 0; b < map.n_blocks; ++b)
        x.data[(static_cast<std::size_t>(c) * map.t_frames + t) * map.n_blocks + b] =
            static_cast<T>(map.at(t, b, c) / 255.0f);
  return x;
}

struct ClipForward {
  nn::Tensor<float> feature;
  double hr_raw_bpm = 0.0;  // de-standardized, at the training frame rate
};

// One clip through backbone + per-clip regression head (no caching).
// Throws ValidationError when the map shape differs from the model input.
ClipForward forward_clip(FloatModel& model, const SpatialTemporalMap& map);

// Ordered clip features through the recurrent head; one de-standardized HR
// (training-rate bpm) per clip, order preserved.
std::vector<double> gru_forward(FloatModel& model,
                                const std::vector<nn::Tensor<float>>& features);

// --- training ------------------------------------------------------------------

struct TrainConfig {
  std::string variant = "compact";
  bool use_gru = false;
  int epochs = 50;
  double lr = 0.001;
  double lambda = 100.0;
  int batch_units = 4;      // smooth-loss units per optimizer step
  double mask_prob = 0.5;   // online masking augmentation
  int mask_min_len = 10;
  int mask_max_len = 30;
  int smooth_group = 6;     // adjacent clips per smooth-loss unit
  double fps_train = 30.0;
  int grid_rows = 5;        // recorded in the checkpoint for video inference
  int grid_cols = 5;
  ColorSpace colorspace = ColorSpace::kYuv;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

// Key/value text form (epochs, lr, lambda, batch_units, mask_prob,
// mask_min_len, mask_max_len, smooth_group, variant, use_gru, fps_train,
// grid, colorspace, seed). Unknown keys are errors.
TrainConfig load_train_config(const std::string& path);
void write_train_config(const TrainConfig& config, const std::string& path);

struct EpochStats {
  int epoch = 0;
  double l1_bpm = 0.0;
  double smooth_bpm = 0.0;
  double total = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

// Called after each epoch; returning false stops training early (for
// validation-driven stopping). The model passed is the live one.
using EpochCallback = std::function<bool(const EpochStats&, FloatModel&)>;

// Deterministic training run: smooth-loss units are consecutive
// non-overlapping groups of up to `smooth_group` adjacent clips of the same
// video (ordered by clip start). Every unit contributes the L1 term; units
// of at least 2 clips also contribute the smooth term. Masking is applied
// online with a per-(epoch, map) seed, and unit gradients are reduced in a
// fixed order, so results are bit-identical across runs and job counts.
// Throws ValidationError on an empty dataset, a map without a label, or a
// non-finite loss (with an epoch diagnostic).
std::unique_ptr<FloatModel> train_model(const std::vector<SpatialTemporalMap>& dataset,
                                        const TrainConfig& config, TrainLog* log = nullptr,
                                        const EpochCallback& on_epoch = nullptr);

// Per-map predictions in bpm, corrected by each map's own frame rate
// relative to the model's training rate. With the recurrent head, maps are
// treated as one ordered sequence.
std::vector<double> predict_maps(FloatModel& model, const std::vector<SpatialTemporalMap>& maps);

// Video-level estimate: sliding windows at the model's input length, maps
// built with the grid/colorspace recorded in the model, per-clip
// predictions scaled by fps_actual/fps_train, averaged over clips.
HrEstimate predict_video(FloatModel& model, const FrameSequence& seq,
                         const LandmarkTrack& landmarks, const LandmarkSchema& schema,
                         double step_seconds = 0.5, int jobs = 1);

// Checkpoint round-trip (parameter container plus model metadata: variant,
// recurrent-head flag, input shape, fps_train, target mean/std, grid,
// colorspace, and any extra entries such as the training seed).
void save_model(FloatModel& model, const std::string& path,
                const std::map<std::string, std::string>& extra_meta = {});
std::unique_ptr<FloatModel> load_model(const std::string& path);

}  // namespace rhythmkit
