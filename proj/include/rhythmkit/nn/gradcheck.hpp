// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/types.hpp"

namespace rhythmkit::nn {

struct GradCheckResult {
  bool pass = true;
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  int checked = 0;
  int unreliable = 0;  // coordinates near kinks, excluded from pass/fail
};

// Central finite differences against analytic gradients, in 64-bit.
//
// `loss_and_grad` must zero the gradient buffers, run forward+backward and
// return the loss; `loss_only` must run a pure forward pass. Up to
// `max_coords_per_param` coordinates are sampled per tensor (all of them for
// small tensors). Coordinates where the two one-sided slopes disagree
// materially are reported as unreliable (a kink sits inside the stencil)
// rather than failed.
inline GradCheckResult grad_check(const std::vector<ParamRef<double>>& params,
                                  const std::function<double()>& loss_and_grad,
                                  const std::function<double()>& loss_only, double tolerance,
                                  Rng& rng, int max_coords_per_param = 8, double step = 1e-5) {
  GradCheckResult result;
  const double base_loss = loss_and_grad();
  if (!std::isfinite(base_loss)) throw ValidationError("non-finite loss in gradient check");

  // Snapshot the analytic gradients before any perturbation re-runs.
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const ParamRef<double>& p : params) analytic.push_back(p.grad->data);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const ParamRef<double>& p = params[pi];
    const std::size_t n = p.value->numel();
    std::vector<std::size_t> coords;
    if (n <= static_cast<std::size_t>(max_coords_per_param)) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_param; ++i)
        coords.push_back(
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1)));
    }

    for (std::size_t ci : coords) {
      const double saved = p.value->data[ci];
      p.value->data[ci] = saved + step;
      const double f_plus = loss_only();
      p.value->data[ci] = saved - step;
      const double f_minus = loss_only();
      p.value->data[ci] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw ValidationError("non-finite loss in gradient check");

      const double fd = (f_plus - f_minus) / (2.0 * step);
      const double slope_plus = (f_plus - base_loss) / step;
      const double slope_minus = (base_loss - f_minus) / step;
      const double slope_scale =
          std::max({std::abs(slope_plus), std::abs(slope_minus), 1e-6});
      if (std::abs(slope_plus - slope_minus) > 0.1 * slope_scale) {
        ++result.unreliable;
        continue;
      }

      const double an = analytic[pi][ci];
      const double rel = std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-6);
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_coordinate = p.name + "[" + std::to_string(ci) + "]";
      }
    }
  }
  result.pass = result.max_rel_error < tolerance;
  return result;
}

}  // namespace rhythmkit::nn
