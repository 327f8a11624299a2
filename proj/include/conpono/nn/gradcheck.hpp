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
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "conpono/nn/params.hpp"

namespace conpono::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Builds a scalar loss on a fresh tape from the bound parameters.
using LossBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients against central differences on a random
/// subsample of coordinates. 64-bit only.
inline GradCheckResult finite_diff_check(const LossBuilder& build, ParamSet<double>& params, double h = 1e-5,
                                         std::size_t samples = 64, std::uint64_t seed = 0) {
  ParamSet<double> analytic = params.zeros_like();
  {
    Tape<double> tape;
    auto vars = params.bind(tape);
    Var<double> loss = build(tape, vars);
    tape.backward(loss);
    analytic.accumulate_grads(tape, vars);
  }
  auto eval = [&] {
    Tape<double> tape;
    auto vars = params.bind(tape, false);
    return build(tape, vars).value().item();
  };

  // Flat coordinate -> (tensor, offset).
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i].size(); ++j) coords.emplace_back(i, j);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(samples, coords.size()));

  GradCheckResult result;
  for (auto [i, j] : coords) {
    double& w = params[i][j];
    const double saved = w;
    w = saved + h;
    const double up = eval();
    w = saved - h;
    const double down = eval();
    w = saved;
    const double numeric = (up - down) / (2 * h);
    const double err = relative_error(analytic[i][j], numeric);
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = params.name(i);
    }
    ++result.coordinates;
  }
  return result;
}

}  // namespace conpono::nn
