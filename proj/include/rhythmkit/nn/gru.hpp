// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rhythmkit/nn/layers.hpp"
#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit::nn {

// Gated recurrent unit:
//   z = σ(W_z x + U_z h + b_z)
//   r = σ(W_r x + U_r h + b_r)
//   h̃ = tanh(W_h x + U_h (r⊙h) + b_h)
//   h_t = (1−z)⊙h + z⊙h̃
// The convex combination keeps |h_t|∞ ≤ 1 whenever |h_0|∞ ≤ 1.
template <typename T>
class GruCell {
 public:
  GruCell(int input_dim, int hidden_dim)
      : input_dim_(input_dim), hidden_dim_(hidden_dim),
        wz_({hidden_dim, input_dim}), uz_({hidden_dim, hidden_dim}), bz_({hidden_dim}),
        wr_({hidden_dim, input_dim}), ur_({hidden_dim, hidden_dim}), br_({hidden_dim}),
        wh_({hidden_dim, input_dim}), uh_({hidden_dim, hidden_dim}), bh_({hidden_dim}),
        gwz_({hidden_dim, input_dim}), guz_({hidden_dim, hidden_dim}), gbz_({hidden_dim}),
        gwr_({hidden_dim, input_dim}), gur_({hidden_dim, hidden_dim}), gbr_({hidden_dim}),
        gwh_({hidden_dim, input_dim}), guh_({hidden_dim, hidden_dim}), gbh_({hidden_dim}) {
    if (input_dim < 1 || hidden_dim < 1) throw ValidationError("bad gru geometry");
  }

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  void init(Rng& rng) {
    init_he_uniform(wz_, input_dim_, rng);
    init_he_uniform(uz_, hidden_dim_, rng);
    bz_.zero();
    init_he_uniform(wr_, input_dim_, rng);
    init_he_uniform(ur_, hidden_dim_, rng);
    br_.zero();
    init_he_uniform(wh_, input_dim_, rng);
    init_he_uniform(uh_, hidden_dim_, rng);
    bh_.zero();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".wz", &wz_, &gwz_});
    out.push_back({prefix + ".uz", &uz_, &guz_});
    out.push_back({prefix + ".bz", &bz_, &gbz_});
    out.push_back({prefix + ".wr", &wr_, &gwr_});
    out.push_back({prefix + ".ur", &ur_, &gur_});
    out.push_back({prefix + ".br", &br_, &gbr_});
    out.push_back({prefix + ".wh", &wh_, &gwh_});
    out.push_back({prefix + ".uh", &uh_, &guh_});
    out.push_back({prefix + ".bh", &bh_, &gbh_});
  }

  // Single step without caching; the verification surface for the gate
  // equations.
  Tensor<T> step(const Tensor<T>& x, const Tensor<T>& h_prev) const {
    check_dims(x, h_prev);
    StepCache cache;
    return step_impl(x, h_prev, cache);
  }

  // Sequence forward with caching for backward-through-time. h_0 is zeros.
  std::vector<Tensor<T>> forward_sequence(const std::vector<Tensor<T>>& xs, bool cache = true) {
    if (xs.empty()) throw ValidationError("empty sequence");
    if (cache) {
      caches_.clear();
      caches_.reserve(xs.size());
    }
    std::vector<Tensor<T>> hs;
    hs.reserve(xs.size());
    Tensor<T> h({hidden_dim_});
    for (const Tensor<T>& x : xs) {
      check_dims(x, h);
      StepCache step_cache;
      step_cache.x = x;
      step_cache.h_prev = h;
      h = step_impl(x, h, step_cache);
      if (cache) caches_.push_back(std::move(step_cache));
      hs.push_back(h);
    }
    return hs;
  }

  // grad_hs[t] is ∂loss/∂h_t from the heads; returns ∂loss/∂x_t and
  // accumulates parameter gradients.
  std::vector<Tensor<T>> backward_sequence(const std::vector<Tensor<T>>& grad_hs) {
    if (grad_hs.size() != caches_.size())
      throw ValidationError("gru gradient count mismatch");
    const int H = hidden_dim_, D = input_dim_;
    std::vector<Tensor<T>> grad_xs(grad_hs.size(), Tensor<T>({D}));
    VectorX<T> carry = VectorX<T>::Zero(H);

    Eigen::Map<const MatrixRM<T>> wzm(wz_.data.data(), H, D), uzm(uz_.data.data(), H, H);
    Eigen::Map<const MatrixRM<T>> wrm(wr_.data.data(), H, D), urm(ur_.data.data(), H, H);
    Eigen::Map<const MatrixRM<T>> whm(wh_.data.data(), H, D), uhm(uh_.data.data(), H, H);
    Eigen::Map<MatrixRM<T>> gwzm(gwz_.data.data(), H, D), guzm(guz_.data.data(), H, H);
    Eigen::Map<MatrixRM<T>> gwrm(gwr_.data.data(), H, D), gurm(gur_.data.data(), H, H);
    Eigen::Map<MatrixRM<T>> gwhm(gwh_.data.data(), H, D), guhm(guh_.data.data(), H, H);
    Eigen::Map<VectorX<T>> gbzv(gbz_.data.data(), H), gbrv(gbr_.data.data(), H),
        gbhv(gbh_.data.data(), H);

    for (int t = static_cast<int>(caches_.size()) - 1; t >= 0; --t) {
      const StepCache& c = caches_[static_cast<std::size_t>(t)];
      Eigen::Map<const VectorX<T>> gh_in(grad_hs[static_cast<std::size_t>(t)].data.data(), H);
      Eigen::Map<const VectorX<T>> xv(c.x.data.data(), D);
      Eigen::Map<const VectorX<T>> hp(c.h_prev.data.data(), H);
      Eigen::Map<const VectorX<T>> zv(c.z.data.data(), H);
      Eigen::Map<const VectorX<T>> rv(c.r.data.data(), H);
      Eigen::Map<const VectorX<T>> hcv(c.hc.data.data(), H);
      Eigen::Map<const VectorX<T>> rhv(c.rh.data.data(), H);

      const VectorX<T> gh = gh_in + carry;
      const VectorX<T> gz = gh.cwiseProduct(hcv - hp);
      const VectorX<T> ghc = gh.cwiseProduct(zv);
      VectorX<T> ghp = gh.cwiseProduct(VectorX<T>::Ones(H) - zv);

      const VectorX<T> gac =
          ghc.cwiseProduct(VectorX<T>::Ones(H) - hcv.cwiseProduct(hcv));
      gwhm.noalias() += gac * xv.transpose();
      guhm.noalias() += gac * rhv.transpose();
      gbhv += gac;
      const VectorX<T> grh = uhm.transpose() * gac;
      const VectorX<T> gr = grh.cwiseProduct(hp);
      ghp += grh.cwiseProduct(rv);

      const VectorX<T> gar = gr.cwiseProduct(rv).cwiseProduct(VectorX<T>::Ones(H) - rv);
      gwrm.noalias() += gar * xv.transpose();
      gurm.noalias() += gar * hp.transpose();
      gbrv += gar;
      ghp.noalias() += urm.transpose() * gar;

      const VectorX<T> gaz = gz.cwiseProduct(zv).cwiseProduct(VectorX<T>::Ones(H) - zv);
      gwzm.noalias() += gaz * xv.transpose();
      guzm.noalias() += gaz * hp.transpose();
      gbzv += gaz;
      ghp.noalias() += uzm.transpose() * gaz;

      Eigen::Map<VectorX<T>> gx(grad_xs[static_cast<std::size_t>(t)].data.data(), D);
      gx.noalias() = whm.transpose() * gac + wrm.transpose() * gar + wzm.transpose() * gaz;
      carry = ghp;
    }
    caches_.clear();
    return grad_xs;
  }

  void clear_cache() { caches_.clear(); }

 private:
  struct StepCache {
    Tensor<T> x, h_prev, z, r, hc, rh;
  };

  void check_dims(const Tensor<T>& x, const Tensor<T>& h) const {
    if (static_cast<int>(x.numel()) != input_dim_)
      throw ValidationError("gru input size mismatch: got " + shape_string(x.shape));
    if (static_cast<int>(h.numel()) != hidden_dim_)
      throw ValidationError("gru hidden size mismatch: got " + shape_string(h.shape));
  }

  static T sigmoid(T v) { return T{1} / (T{1} + std::exp(-v)); }

  Tensor<T> step_impl(const Tensor<T>& x, const Tensor<T>& h_prev, StepCache& cache) const {
    const int H = hidden_dim_, D = input_dim_;
    Eigen::Map<const VectorX<T>> xv(x.data.data(), D);
    Eigen::Map<const VectorX<T>> hp(h_prev.data.data(), H);
    Eigen::Map<const MatrixRM<T>> wzm(wz_.data.data(), H, D), uzm(uz_.data.data(), H, H);
    Eigen::Map<const MatrixRM<T>> wrm(wr_.data.data(), H, D), urm(ur_.data.data(), H, H);
    Eigen::Map<const MatrixRM<T>> whm(wh_.data.data(), H, D), uhm(uh_.data.data(), H, H);
    Eigen::Map<const VectorX<T>> bzv(bz_.data.data(), H), brv(br_.data.data(), H),
        bhv(bh_.data.data(), H);

    VectorX<T> z = wzm * xv + uzm * hp + bzv;
    VectorX<T> r = wrm * xv + urm * hp + brv;
    for (int i = 0; i < H; ++i) {
      z[i] = sigmoid(z[i]);
      r[i] = sigmoid(r[i]);
    }
    const VectorX<T> rh = r.cwiseProduct(hp);
    VectorX<T> hc = whm * xv + uhm * rh + bhv;
    for (int i = 0; i < H; ++i) hc[i] = std::tanh(hc[i]);

    Tensor<T> h({H});
    Eigen::Map<VectorX<T>> hv(h.data.data(), H);
    hv = (VectorX<T>::Ones(H) - z).cwiseProduct(hp) + z.cwiseProduct(hc);

    cache.z = Tensor<T>({H});
    cache.r = Tensor<T>({H});
    cache.hc = Tensor<T>({H});
    cache.rh = Tensor<T>({H});
    for (int i = 0; i < H; ++i) {
      cache.z.data[static_cast<std::size_t>(i)] = z[i];
      cache.r.data[static_cast<std::size_t>(i)] = r[i];
      cache.hc.data[static_cast<std::size_t>(i)] = hc[i];
      cache.rh.data[static_cast<std::size_t>(i)] = rh[i];
    }
    return h;
  }

  int input_dim_, hidden_dim_;
  Tensor<T> wz_, uz_, bz_, wr_, ur_, br_, wh_, uh_, bh_;
  Tensor<T> gwz_, guz_, gbz_, gwr_, gur_, gbr_, gwh_, guh_, gbh_;
  std::vector<StepCache> caches_;
};

}  // namespace rhythmkit::nn
