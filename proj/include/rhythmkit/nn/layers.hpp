// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit::nn {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// He-style uniform fan-in initialization: U(−√(6/fan_in), +√(6/fan_in)).
template <typename T>
void init_he_uniform(Tensor<T>& w, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

// Layers cache forward activations on a stack when asked to (`cache=true`),
// and each backward pops the most recent entry. Processing several inputs
// before backpropagating therefore works as long as backwards run in exact
// reverse forward order, which every training path here observes.

// --- 2D convolution (single sample, CHW layout) ------------------------------

// Cross-correlation with zero padding, implemented as im2col plus one GEMM.
template <typename T>
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int kh, int kw, int stride_h, int stride_w, int pad_h, int pad_w)
      : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), sh_(stride_h), sw_(stride_w),
        ph_(pad_h), pw_(pad_w),
        weight_(Tensor<T>({out_ch, in_ch * kh * kw})),
        bias_(Tensor<T>({out_ch})),
        weight_grad_(Tensor<T>({out_ch, in_ch * kh * kw})),
        bias_grad_(Tensor<T>({out_ch})) {
    if (in_ch < 1 || out_ch < 1 || kh < 1 || kw < 1 || stride_h < 1 || stride_w < 1 ||
        pad_h < 0 || pad_w < 0)
      throw ValidationError("bad convolution geometry");
  }

  void init(Rng& rng) {
    init_he_uniform(weight_, in_ch_ * kh_ * kw_, rng);
    bias_.zero();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &weight_grad_});
    out.push_back({prefix + ".bias", &bias_, &bias_grad_});
  }

  std::vector<int> output_shape(const std::vector<int>& in_shape) const {
    if (in_shape.size() != 3 || in_shape[0] != in_ch_)
      throw ValidationError("convolution input shape mismatch: got " + shape_string(in_shape));
    if (in_shape[1] + 2 * ph_ < kh_ || in_shape[2] + 2 * pw_ < kw_)
      throw ValidationError("kernel larger than padded input");
    const int oh = (in_shape[1] + 2 * ph_ - kh_) / sh_ + 1;
    const int ow = (in_shape[2] + 2 * pw_ - kw_) / sw_ + 1;
    return {out_ch_, oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& x, bool cache = true) {
    const std::vector<int> out_shape = output_shape(x.shape);
    const int h = x.shape[1], w = x.shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    const int cols = oh * ow;
    const int rows = in_ch_ * kh_ * kw_;

    Tensor<T> col({rows, cols});
    for (int c = 0; c < in_ch_; ++c) {
      for (int ky = 0; ky < kh_; ++ky) {
        for (int kx = 0; kx < kw_; ++kx) {
          const int row = (c * kh_ + ky) * kw_ + kx;
          T* dst = col.data.data() + static_cast<std::size_t>(row) * cols;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * sh_ + ky - ph_;
            if (iy < 0 || iy >= h) continue;
            const T* src = x.data.data() + (static_cast<std::size_t>(c) * h + iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * sw_ + kx - pw_;
              if (ix >= 0 && ix < w) dst[oy * ow + ox] = src[ix];
            }
          }
        }
      }
    }

    Tensor<T> y(out_shape);
    Eigen::Map<const MatrixRM<T>> wm(weight_.data.data(), out_ch_, rows);
    Eigen::Map<const MatrixRM<T>> cm(col.data.data(), rows, cols);
    Eigen::Map<MatrixRM<T>> ym(y.data.data(), out_ch_, cols);
    ym.noalias() = wm * cm;
    for (int oc = 0; oc < out_ch_; ++oc) ym.row(oc).array() += bias_.data[oc];

    if (cache) cache_.push_back({std::move(col), x.shape});
    return y;
  }

  // Accumulates parameter gradients and returns the input gradient.
  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (cache_.empty()) throw ValidationError("convolution backward without forward");
    const Cache& c = cache_.back();
    const int h = c.in_shape[1], w = c.in_shape[2];
    const int oh = grad_out.shape[1], ow = grad_out.shape[2];
    const int cols = oh * ow;
    const int rows = in_ch_ * kh_ * kw_;
    if (grad_out.shape[0] != out_ch_ || static_cast<int>(grad_out.numel()) != out_ch_ * cols)
      throw ValidationError("convolution gradient shape mismatch");

    Eigen::Map<const MatrixRM<T>> gy(grad_out.data.data(), out_ch_, cols);
    Eigen::Map<const MatrixRM<T>> cm(c.col.data.data(), rows, cols);
    Eigen::Map<MatrixRM<T>> gw(weight_grad_.data.data(), out_ch_, rows);
    gw.noalias() += gy * cm.transpose();
    for (int oc = 0; oc < out_ch_; ++oc) bias_grad_.data[oc] += gy.row(oc).sum();

    MatrixRM<T> gcol(rows, cols);
    Eigen::Map<const MatrixRM<T>> wm(weight_.data.data(), out_ch_, rows);
    gcol.noalias() = wm.transpose() * gy;

    Tensor<T> gx(c.in_shape);
    for (int ch = 0; ch < in_ch_; ++ch) {
      for (int ky = 0; ky < kh_; ++ky) {
        for (int kx = 0; kx < kw_; ++kx) {
          const int row = (ch * kh_ + ky) * kw_ + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * sh_ + ky - ph_;
            if (iy < 0 || iy >= h) continue;
            T* dst = gx.data.data() + (static_cast<std::size_t>(ch) * h + iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * sw_ + kx - pw_;
              if (ix >= 0 && ix < w) dst[ix] += gcol(row, oy * ow + ox);
            }
          }
        }
      }
    }
    cache_.pop_back();
    return gx;
  }

  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    Tensor<T> col;
    std::vector<int> in_shape;
  };

  int in_ch_, out_ch_, kh_, kw_, sh_, sw_, ph_, pw_;
  Tensor<T> weight_, bias_, weight_grad_, bias_grad_;
  std::vector<Cache> cache_;
};

// --- dense layer --------------------------------------------------------------

template <typename T>
class Dense {
 public:
  Dense(int in_dim, int out_dim)
      : in_dim_(in_dim), out_dim_(out_dim),
        weight_(Tensor<T>({out_dim, in_dim})),
        bias_(Tensor<T>({out_dim})),
        weight_grad_(Tensor<T>({out_dim, in_dim})),
        bias_grad_(Tensor<T>({out_dim})) {
    if (in_dim < 1 || out_dim < 1) throw ValidationError("bad dense geometry");
  }

  void init(Rng& rng) {
    init_he_uniform(weight_, in_dim_, rng);
    bias_.zero();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &weight_grad_});
    out.push_back({prefix + ".bias", &bias_, &bias_grad_});
  }

  Tensor<T> forward(const Tensor<T>& x, bool cache = true) {
    if (static_cast<int>(x.numel()) != in_dim_)
      throw ValidationError("dense input size mismatch: got " + shape_string(x.shape));
    Tensor<T> y({out_dim_});
    Eigen::Map<const MatrixRM<T>> wm(weight_.data.data(), out_dim_, in_dim_);
    Eigen::Map<const VectorX<T>> xv(x.data.data(), in_dim_);
    Eigen::Map<VectorX<T>> yv(y.data.data(), out_dim_);
    Eigen::Map<const VectorX<T>> bv(bias_.data.data(), out_dim_);
    yv.noalias() = wm * xv + bv;
    if (cache) cache_.push_back(x);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (cache_.empty()) throw ValidationError("dense backward without forward");
    if (static_cast<int>(grad_out.numel()) != out_dim_)
      throw ValidationError("dense gradient size mismatch");
    const Tensor<T>& in = cache_.back();
    Eigen::Map<const VectorX<T>> gy(grad_out.data.data(), out_dim_);
    Eigen::Map<const VectorX<T>> xv(in.data.data(), in_dim_);
    Eigen::Map<MatrixRM<T>> gw(weight_grad_.data.data(), out_dim_, in_dim_);
    gw.noalias() += gy * xv.transpose();
    Eigen::Map<VectorX<T>> gb(bias_grad_.data.data(), out_dim_);
    gb += gy;

    Tensor<T> gx(in.shape);
    Eigen::Map<const MatrixRM<T>> wm(weight_.data.data(), out_dim_, in_dim_);
    Eigen::Map<VectorX<T>> gxv(gx.data.data(), in_dim_);
    gxv.noalias() = wm.transpose() * gy;
    cache_.pop_back();
    return gx;
  }

  void clear_cache() { cache_.clear(); }

 private:
  int in_dim_, out_dim_;
  Tensor<T> weight_, bias_, weight_grad_, bias_grad_;
  std::vector<Tensor<T>> cache_;
};

// --- activations and pooling ---------------------------------------------------

// max(0, x); the derivative at exactly 0 uses the 0 subgradient.
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool cache = true) {
    Tensor<T> y = x;
    for (T& v : y.data) v = v > T{0} ? v : T{0};
    if (cache) cache_.push_back(x);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (cache_.empty()) throw ValidationError("relu backward without forward");
    const Tensor<T>& in = cache_.back();
    if (!grad_out.same_shape(in)) throw ValidationError("relu gradient shape mismatch");
    Tensor<T> gx = grad_out;
    for (std::size_t i = 0; i < gx.numel(); ++i)
      if (in.data[i] <= T{0}) gx.data[i] = T{0};
    cache_.pop_back();
    return gx;
  }

  void clear_cache() { cache_.clear(); }

 private:
  std::vector<Tensor<T>> cache_;
};

// (C, H, W) → (C) spatial mean.
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool cache = true) {
    if (x.shape.size() != 3) throw ValidationError("pooling expects a CHW tensor");
    const int c = x.shape[0];
    const std::size_t hw = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
    Tensor<T> y({c});
    for (int ch = 0; ch < c; ++ch) {
      T sum{0};
      const T* src = x.data.data() + static_cast<std::size_t>(ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += src[i];
      y.data[static_cast<std::size_t>(ch)] = sum / static_cast<T>(hw);
    }
    if (cache) cache_.push_back(x.shape);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (cache_.empty()) throw ValidationError("pooling backward without forward");
    const std::vector<int>& in_shape = cache_.back();
    if (grad_out.shape.size() != 1 || grad_out.shape[0] != in_shape[0])
      throw ValidationError("pooling gradient shape mismatch");
    const std::size_t hw = static_cast<std::size_t>(in_shape[1]) * in_shape[2];
    Tensor<T> gx(in_shape);
    for (int ch = 0; ch < in_shape[0]; ++ch) {
      const T g = grad_out.data[static_cast<std::size_t>(ch)] / static_cast<T>(hw);
      T* dst = gx.data.data() + static_cast<std::size_t>(ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = g;
    }
    cache_.pop_back();
    return gx;
  }

  void clear_cache() { cache_.clear(); }

 private:
  std::vector<std::vector<int>> cache_;
};

// --- RMS normalization -----------------------------------------------------------

// y = x / sqrt(mean(x²) + ε). The backbone has no normalization layers, so its
// feature scale is unbounded during training; dividing the recurrent head's
// input by its root-mean-square keeps the gate pre-activations in the sigmoid
// and tanh operating range at any feature scale, without adding parameters.
inline constexpr double kRmsNormEps = 1e-6;

template <typename T>
Tensor<T> rms_normalize(const Tensor<T>& x) {
  if (x.numel() == 0) throw ValidationError("rms normalization of an empty tensor");
  double ms = 0.0;
  for (const T v : x.data) ms += static_cast<double>(v) * static_cast<double>(v);
  ms /= static_cast<double>(x.numel());
  const double inv = 1.0 / std::sqrt(ms + kRmsNormEps);
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i)
    y.data[i] = static_cast<T>(static_cast<double>(x.data[i]) * inv);
  return y;
}

// ∂/∂x of rms_normalize: with r = sqrt(mean(x²)+ε) and y = x/r,
// dL/dx = (dL/dy − y·mean(dL/dy ⊙ y)) / r.
template <typename T>
Tensor<T> rms_normalize_backward(const Tensor<T>& x, const Tensor<T>& grad_y) {
  if (!x.same_shape(grad_y)) throw ValidationError("rms normalization gradient shape mismatch");
  const double n = static_cast<double>(x.numel());
  double ms = 0.0;
  for (const T v : x.data) ms += static_cast<double>(v) * static_cast<double>(v);
  ms /= n;
  const double r = std::sqrt(ms + kRmsNormEps);
  double dot = 0.0;  // mean(dL/dy ⊙ y)
  for (std::size_t i = 0; i < x.numel(); ++i)
    dot += static_cast<double>(grad_y.data[i]) * (static_cast<double>(x.data[i]) / r);
  dot /= n;
  Tensor<T> gx(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double y = static_cast<double>(x.data[i]) / r;
    gx.data[i] = static_cast<T>((static_cast<double>(grad_y.data[i]) - y * dot) / r);
  }
  return gx;
}

// --- L1 loss -------------------------------------------------------------------

// Mean absolute error over paired scalars; gradient uses sgn(0) = 0.
template <typename T>
T l1_loss(const std::vector<T>& pred, const std::vector<T>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ValidationError("l1 loss needs equal-length non-empty inputs");
  T sum{0};
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - target[i]);
  return sum / static_cast<T>(pred.size());
}

template <typename T>
std::vector<T> l1_loss_grad(const std::vector<T>& pred, const std::vector<T>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ValidationError("l1 loss needs equal-length non-empty inputs");
  std::vector<T> g(pred.size(), T{0});
  const T inv_n = T{1} / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    g[i] = d > T{0} ? inv_n : (d < T{0} ? -inv_n : T{0});
  }
  return g;
}

}  // namespace rhythmkit::nn
