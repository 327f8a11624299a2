/* Copyright 2026 The conpono-cpp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "conpono/nn/params.hpp"

namespace conpono::nn {

struct AdamConfig {
  double base_lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double warmup_fraction = 0.25;
  std::int64_t total_steps = 1;
};

/// Linear warmup from 0 to base_lr, then linear decay to 0 at total_steps.
/// `step` is the 0-based index of the update about to be applied.
inline double scheduled_lr(const AdamConfig& cfg, std::int64_t step) {
  if (step < 0 || step >= cfg.total_steps) return 0.0;
  const double total = static_cast<double>(cfg.total_steps);
  const double warmup = std::floor(cfg.warmup_fraction * total);
  const double s = static_cast<double>(step);
  const double decay = (total - s) / (total - warmup);
  const double factor = warmup > 0 ? std::min(s / warmup, decay) : decay;
  return cfg.base_lr * std::max(0.0, factor);
}

template <class T>
struct OptimizerState {
  AdamConfig config;
  ParamSet<T> first_moment;
  ParamSet<T> second_moment;
  std::int64_t step = 0;

  OptimizerState() = default;
  OptimizerState(AdamConfig cfg, const ParamSet<T>& params)
      : config(cfg), first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}
};

/// One bias-corrected Adam update at the scheduled learning rate. Moments
/// advance even when the scheduled rate is zero. Returns the rate used.
template <class T>
double adam_step(ParamSet<T>& params, const ParamSet<T>& grads, OptimizerState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    fail("adam_step: parameter/gradient count mismatch (", params.size(), " vs ", grads.size(), ")");
  const AdamConfig& c = state.config;
  const double lr = scheduled_lr(c, state.step);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = params[i];
    const Tensor<T>& g = grads[i];
    if (w.shape() != g.shape())
      fail("adam_step: gradient shape ", shape_str(g.shape()), " does not match parameter ", params.name(i), " ",
           shape_str(w.shape()));
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      if (lr > 0.0) {
        const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + c.eps);
        w[j] = static_cast<T>(static_cast<double>(w[j]) - update);
      }
    }
  }
  ++state.step;
  return lr;
}

}  // namespace conpono::nn
