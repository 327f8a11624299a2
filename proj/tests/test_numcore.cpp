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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "conpono/nn/adam.hpp"
#include "conpono/nn/gradcheck.hpp"
#include "conpono/nn/ops.hpp"

namespace conpono::nn {
namespace {

using TensorD = Tensor<double>;
using VarD = Var<double>;

TensorD random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  TensorD t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Reduces an op output to a scalar through a fixed random weighting so no
// coordinate has an identically zero gradient.
VarD weighted_sum(VarD y, std::uint64_t seed) {
  Tape<double>& tape = *y.tape;
  return sum(mul(y, tape.constant(random_tensor(y.shape(), seed))));
}

GradCheckResult check_unary(const std::function<VarD(VarD)>& op, Shape shape, std::uint64_t seed = 1) {
  ParamSet<double> ps;
  ps.add("x", random_tensor(shape, seed));
  return finite_diff_check([&](Tape<double>&, const std::vector<VarD>& v) { return weighted_sum(op(v[0]), 99); }, ps,
                           1e-5, 64, seed);
}

GradCheckResult check_binary(const std::function<VarD(VarD, VarD)>& op, Shape a, Shape b) {
  ParamSet<double> ps;
  ps.add("a", random_tensor(a, 3));
  ps.add("b", random_tensor(b, 4));
  return finite_diff_check(
      [&](Tape<double>&, const std::vector<VarD>& v) { return weighted_sum(op(v[0], v[1]), 98); }, ps, 1e-5, 64, 5);
}

constexpr double kPrimitiveTol = 1e-6;

TEST(Primitives, MatmulGradient) {
  EXPECT_LT(check_binary([](VarD a, VarD b) { return matmul(a, b); }, {3, 4}, {4, 5}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, AddGradientIncludingBroadcast) {
  EXPECT_LT(check_binary([](VarD a, VarD b) { return add(a, b); }, {3, 4}, {3, 4}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_binary([](VarD a, VarD b) { return add(a, b); }, {3, 4}, {4}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_binary([](VarD a, VarD b) { return add(a, b); }, {3, 4}, {1, 4}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, ScaleTransposeGradient) {
  EXPECT_LT(check_unary([](VarD x) { return scale(x, 2.5); }, {3, 4}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_unary([](VarD x) { return transpose(x); }, {3, 4}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, EmbeddingGatherGradient) {
  const std::vector<std::int32_t> ids = {2, 0, 2, 4};
  EXPECT_LT(check_unary([&](VarD t) { return embedding_gather(t, ids); }, {5, 3}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, SoftmaxGradientBothAxes) {
  EXPECT_LT(check_unary([](VarD x) { return softmax(x, -1); }, {3, 5}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_unary([](VarD x) { return softmax(x, 0); }, {3, 5}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, LayerNormGradient) {
  ParamSet<double> ps;
  ps.add("x", random_tensor({4, 6}, 7));
  ps.add("gamma", random_tensor({6}, 8));
  ps.add("beta", random_tensor({6}, 9));
  auto r = finite_diff_check(
      [](Tape<double>&, const std::vector<VarD>& v) { return weighted_sum(layer_norm(v[0], v[1], v[2]), 97); }, ps);
  EXPECT_LT(r.max_rel_error, kPrimitiveTol);
}

TEST(Primitives, GeluTanhGradient) {
  EXPECT_LT(check_unary([](VarD x) { return gelu(x); }, {3, 4}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_unary([](VarD x) { return nn::tanh(x); }, {3, 4}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, DropoutGradientWithFixedSeed) {
  EXPECT_LT(check_unary([](VarD x) { return dropout(x, 0.3, 42); }, {4, 8}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, CrossEntropyGradient) {
  const std::vector<std::int32_t> targets = {1, 0, 3};
  ParamSet<double> ps;
  ps.add("logits", random_tensor({3, 4}, 11));
  auto r = finite_diff_check(
      [&](Tape<double>&, const std::vector<VarD>& v) { return cross_entropy(v[0], targets); }, ps);
  EXPECT_LT(r.max_rel_error, kPrimitiveTol);
}

TEST(Primitives, ConcatSliceGradient) {
  EXPECT_LT(check_binary([](VarD a, VarD b) { return concat(std::vector<VarD>{a, b}, 0); }, {2, 3}, {4, 3}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_binary([](VarD a, VarD b) { return concat(std::vector<VarD>{a, b}, 1); }, {2, 3}, {2, 5}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_unary([](VarD x) { return slice(x, 0, 1, 3); }, {4, 3}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_unary([](VarD x) { return slice(x, 1, 2, 5); }, {4, 6}).max_rel_error, kPrimitiveTol);
}

TEST(Primitives, ReshapeMulSumGradient) {
  EXPECT_LT(check_unary([](VarD x) { return reshape(x, {4, 3}); }, {3, 4}).max_rel_error, kPrimitiveTol);
  EXPECT_LT(check_binary([](VarD a, VarD b) { return mul(a, b); }, {3, 4}, {3, 4}).max_rel_error, kPrimitiveTol);
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  Tape<double> tape;
  auto y = softmax(tape.constant(TensorD({1, 3})));
  for (double v : y.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, SoftmaxRowsSumToOneWithLargeLogits) {
  Tape<float> tape;
  Tensor<float> x({4, 7});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i) * 100.0f;
  auto y = softmax(tape.constant(x)).value();
  ASSERT_TRUE(y.all_finite());
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += y.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Forward, LayerNormMoments) {
  Tape<double> tape;
  auto y = layer_norm(tape.constant(random_tensor({5, 16}, 2, 3.0)), tape.constant(TensorD({16}, 1.0)),
                      tape.constant(TensorD({16}, 0.0)))
               .value();
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at(r, c) / 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m) / 16;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(Forward, CrossEntropyOfUniformLogitsIsLogC) {
  Tape<double> tape;
  const std::vector<std::int32_t> t = {5};
  EXPECT_NEAR(cross_entropy(tape.constant(TensorD({1, 32})), t).value().item(), std::log(32.0), 1e-12);
}

TEST(Forward, GeluAtZeroIsZero) {
  Tape<double> tape;
  EXPECT_EQ(gelu(tape.constant(TensorD({1}))).value()[0], 0.0);
}

TEST(Forward, ShapeMismatchNamesBothShapes) {
  Tape<double> tape;
  auto a = tape.constant(TensorD({2, 3}));
  auto b = tape.constant(TensorD({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x5]"), std::string::npos);
  }
}

TEST(Backward, LinearCaseMatchesHandDerivation) {
  // loss = sum(W x): dW[i][j] = x[j].
  Tape<double> tape;
  auto W = tape.variable(random_tensor({3, 4}, 1));
  auto x = tape.constant(TensorD({4, 1}, std::vector<double>{1, 2, 3, 4}));
  tape.backward(sum(matmul(W, x)));
  auto g = tape.grad(W);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(g.at(i, j), static_cast<double>(j + 1));
  EXPECT_EQ(tape.grad(x), TensorD({4, 1}));
}

TEST(Backward, UnusedParameterGetsZero) {
  Tape<double> tape;
  auto a = tape.variable(TensorD({2}, 1.0));
  auto unused = tape.variable(TensorD({3}, 1.0));
  tape.backward(sum(a));
  EXPECT_EQ(tape.grad(unused), TensorD({3}));
}

TEST(Backward, NonScalarLossIsAnError) {
  Tape<double> tape;
  auto a = tape.variable(TensorD({2}, 1.0));
  EXPECT_THROW(tape.backward(a), Error);
}

TEST(GradCheck, QuadraticAtThree) {
  ParamSet<double> ps;
  ps.add("w", TensorD({1}, 3.0));
  auto r = finite_diff_check([](Tape<double>&, const std::vector<VarD>& v) { return sum(mul(v[0], v[0])); }, ps);
  EXPECT_LT(r.max_rel_error, 1e-9);
  Tape<double> tape;
  auto w = tape.variable(TensorD({1}, 3.0));
  tape.backward(sum(mul(w, w)));
  EXPECT_NEAR(tape.grad(w)[0], 6.0, 1e-12);
}

TEST(GradCheck, ZeroFunction) {
  ParamSet<double> ps;
  ps.add("w", random_tensor({4}, 1));
  auto r = finite_diff_check(
      [](Tape<double>&, const std::vector<VarD>& v) { return sum(scale(v[0], 0.0)); }, ps);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(Adam, SingleStepMatchesClosedForm) {
  ParamSet<double> params, grads;
  params.add("w", TensorD({1}, 1.0));
  grads.add("w", TensorD({1}, 2.0));  // d(w^2)/dw at w=1
  AdamConfig cfg;
  cfg.base_lr = 0.1;
  cfg.warmup_fraction = 0.0;
  cfg.total_steps = 1000000;
  OptimizerState<double> st(cfg, params);
  adam_step(params, grads, st);
  // Bias-corrected first step: w -= lr * g / (|g| + eps).
  EXPECT_NEAR(params["w"][0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
  EXPECT_NEAR(params["w"][0], 0.9, 1e-6);
}

TEST(Adam, StepZeroOfWarmupIsNoOp) {
  ParamSet<double> params, grads;
  params.add("w", TensorD({2}, 1.0));
  grads.add("w", TensorD({2}, 5.0));
  AdamConfig cfg;
  cfg.base_lr = 0.1;
  cfg.total_steps = 100;
  OptimizerState<double> st(cfg, params);
  EXPECT_EQ(adam_step(params, grads, st), 0.0);
  EXPECT_EQ(params["w"], TensorD({2}, 1.0));
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, ScheduleWarmsUpThenDecays) {
  AdamConfig cfg;
  cfg.base_lr = 1.0;
  cfg.total_steps = 100;
  cfg.warmup_fraction = 0.25;
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 0), 0.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 10), 0.4);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 25), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 70), 0.4);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 100), 0.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(cfg, 150), 0.0);
}

TEST(Adam, IdenticalRunsGiveIdenticalParameters) {
  auto run = [] {
    ParamSet<float> params;
    params.add("w", random_tensor({8}, 3).cast<float>());
    AdamConfig cfg;
    cfg.base_lr = 0.01;
    cfg.total_steps = 20;
    OptimizerState<float> st(cfg, params);
    for (int i = 0; i < 20; ++i) {
      ParamSet<float> g = params.zeros_like();
      for (std::size_t j = 0; j < 8; ++j) g[0][j] = 2 * params[0][j];
      adam_step(params, g, st);
    }
    return params;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace conpono::nn
