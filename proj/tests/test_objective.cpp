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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "conpono/nn/gradcheck.hpp"
#include "reference_model.hpp"
#include "toy.hpp"

namespace conpono {
namespace {

WindowConfig window_with(int num_hard, int num_random, int max_seq = 128) {
  WindowConfig w;
  w.num_hard = num_hard;
  w.num_random = num_random;
  w.max_seq = max_seq;
  return w;
}

double ce(std::vector<double> logits, int target) {
  nn::Tape<double> tape;
  nn::Tensor<double> t({1, logits.size()});
  std::copy(logits.begin(), logits.end(), t.values().begin());
  const TokenId y = target;
  return nn::cross_entropy(tape.constant(t), std::span<const TokenId>(&y, 1)).value().item();
}

TEST(SampledSoftmax, WorkedValues) {
  EXPECT_NEAR(ce({2, 0, 0}, 0), std::log(std::exp(2.0) + 2.0) - 2.0, 1e-12);
  EXPECT_NEAR(ce({2, 0, 0}, 0), 0.2395, 5e-5);
  EXPECT_LT(ce({20, 0, 0}, 0), 1e-8);
  EXPECT_NEAR(ce({0, 0, 0, 0}, 2), std::log(4.0), 1e-15);
}

TEST(SampledSoftmax, ShiftInvariant) {
  const std::vector<double> l{0.3, -1.2, 2.5, 0.0};
  std::vector<double> s = l;
  for (double& v : s) v += 123.0;
  EXPECT_NEAR(ce(l, 1), ce(s, 1), 1e-12);
}

TEST(SampledSoftmax, PermutationEquivariant) {
  const std::vector<double> l{0.3, -1.2, 2.5, 0.0};
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<double> p(4);
  for (std::size_t i = 0; i < 4; ++i) p[i] = l[static_cast<std::size_t>(perm[i])];
  // The true candidate (originally 3) sits at position 2 after permuting.
  EXPECT_NEAR(ce(l, 3), ce(p, 2), 1e-15);
}

class UniformLogits : public ::testing::TestWithParam<std::tuple<int, int, Coupling>> {};

TEST_P(UniformLogits, LossIsLogC) {
  const auto [hard, random, coupling] = GetParam();
  auto d = toy::make_data(window_with(hard, random), 8);
  ASSERT_FALSE(d.instances.empty());
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, coupling), 1);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < 4; ++i)
    batch.push_back(prepare_instance(d.instances[i], d.window, coupling, d.vocab_size, 5 + i));
  const double C = hard + random + 1;
  EXPECT_NEAR(*total_loss(batch, p, 0.0).conpono, std::log(C), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(AllCouplings, UniformLogits,
                         ::testing::Combine(::testing::Values(1, 3), ::testing::Values(1, 4, 28),
                                            ::testing::Values(Coupling::kCombined, Coupling::kIsolated, Coupling::kUni)));

TEST(Objective, StoredPlansOnlyForPairLayouts) {
  auto d = toy::make_data(window_with(1, 1));
  EXPECT_NO_THROW(prepare_instance(d.instances[0], d.window, Coupling::kCombined, d.vocab_size, std::nullopt));
  EXPECT_THROW(prepare_instance(d.instances[0], d.window, Coupling::kIsolated, d.vocab_size, std::nullopt), Error);
}

TEST(Objective, IsolatedMasksTheAnchorPass) {
  auto d = toy::make_data(window_with(1, 1));
  auto iso = prepare_instance(d.instances[0], d.window, Coupling::kIsolated, d.vocab_size, 9);
  EXPECT_EQ(iso.mlm_candidate, -1);
  EXPECT_TRUE(iso.anchor.has_value());
  auto comb = prepare_instance(d.instances[0], d.window, Coupling::kCombined, d.vocab_size, 9);
  EXPECT_EQ(comb.mlm_candidate, comb.true_index);
  auto uni = prepare_instance(d.instances[0], d.window, Coupling::kUni, d.vocab_size, 9);
  EXPECT_FALSE(uni.anchor.has_value());
}

TEST(Objective, MixedModesAreAnError) {
  auto d = toy::make_data(window_with(1, 1));
  const auto pairs = build_corpus_pairs(d.corpus, d.window, 1, d.vocab_size, PairMode::kBso);
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, Coupling::kCombined), 1);
  std::vector<Example> batch{prepare_instance(d.instances[0], d.window, Coupling::kCombined, d.vocab_size, 1),
                             prepare_pair(pairs[0], d.window, ObjectiveMode::kBso, d.vocab_size, 1)};
  EXPECT_THROW(total_loss(batch, p, 1.0), Error);
  EXPECT_THROW(total_loss(std::vector<Example>{}, p, 1.0), Error);
}

TEST(Objective, ZeroMlmWeightDropsTheTerm) {
  auto d = toy::make_data(window_with(1, 1));
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, Coupling::kCombined), 1);
  toy::randomize(p, 0.3, 2);
  std::vector<Example> batch{prepare_instance(d.instances[0], d.window, Coupling::kCombined, d.vocab_size, 1)};
  const auto l0 = total_loss(batch, p, 0.0);
  EXPECT_FALSE(l0.mlm.has_value());
  EXPECT_DOUBLE_EQ(l0.total, *l0.conpono);
  const auto l1 = total_loss(batch, p, 0.5);
  ASSERT_TRUE(l1.mlm.has_value());
  EXPECT_NEAR(l1.total, *l1.conpono + 0.5 * *l1.mlm, 1e-12);
}

TEST(Objective, IdenticalCandidatesGiveLogC) {
  auto d = toy::make_data(window_with(3, 4));
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, Coupling::kCombined), 1);
  toy::randomize(p, 0.3, 3);
  TrainingInstance inst = d.instances[0];
  for (auto& c : inst.candidates) c.ids = inst.candidates[static_cast<std::size_t>(inst.true_index)].ids;
  d.window.mask_rate = 0.0;
  auto prepared = prepare_instance(inst, d.window, Coupling::kCombined, d.vocab_size, 1);
  EXPECT_NEAR(*total_loss(std::vector<Example>{prepared}, p, 0.0).conpono, std::log(8.0), 1e-12);
}

TEST(Objective, BatchLossMatchesPerExampleMean) {
  auto d = toy::make_data(window_with(1, 2));
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, Coupling::kCombined), 1);
  toy::randomize(p, 0.3, 4);
  std::vector<Example> batch;
  double sum = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    batch.push_back(prepare_instance(d.instances[i], d.window, Coupling::kCombined, d.vocab_size, i));
    sum += total_loss(std::vector<Example>{batch.back()}, p, 1.0).total;
  }
  nn::Tape<double> tape;
  ForwardContext<double> ctx(tape, p);
  EXPECT_NEAR(batch_loss(ctx, batch, 1.0).value().item(), sum / 3.0, 1e-12);
  auto grads = p.params().zeros_like();
  EXPECT_NEAR(batch_gradient(batch, p, 1.0, grads, false, 0).total, sum / 3.0, 1e-12);
}

TEST(Objective, BatchGradientMatchesSingleTape) {
  auto d = toy::make_data(window_with(1, 2));
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, Coupling::kIsolated), 1);
  toy::randomize(p, 0.3, 5);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < 2; ++i)
    batch.push_back(prepare_instance(d.instances[i], d.window, Coupling::kIsolated, d.vocab_size, i));
  nn::Tape<double> tape;
  ForwardContext<double> ctx(tape, p);
  tape.backward(batch_loss(ctx, batch, 1.0));
  auto single = p.params().zeros_like();
  single.accumulate_grads(tape, ctx.vars());
  auto split = p.params().zeros_like();
  batch_gradient(batch, p, 1.0, split, false, 0);
  for (std::size_t i = 0; i < single.size(); ++i)
    for (std::size_t j = 0; j < single[i].size(); ++j) ASSERT_NEAR(single[i][j], split[i][j], 1e-12);
}

class ReferenceOracle : public ::testing::TestWithParam<Coupling> {};

TEST_P(ReferenceOracle, MatchesPlainLoops) {
  const Coupling coupling = GetParam();
  auto d = toy::make_data(window_with(1, 2, 48), 10);
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, coupling, 2), 11);
  toy::randomize(p, 0.4, 12);
  reference::Model ref(p);
  for (std::size_t i = 0; i < 10; ++i) {
    std::vector<Example> batch{prepare_instance(d.instances[i], d.window, coupling, d.vocab_size, 40 + i)};
    EXPECT_NEAR(total_loss(batch, p, 0.7).total, ref.batch_loss(batch, 0.7), 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(AllCouplings, ReferenceOracle,
                         ::testing::Values(Coupling::kCombined, Coupling::kIsolated, Coupling::kUni));

TEST(ReferenceOracle, PairObjectives) {
  auto d = toy::make_data(window_with(1, 2, 48), 10);
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, Coupling::kCombined), 11);
  toy::randomize(p, 0.4, 13);
  reference::Model ref(p);
  for (auto [mode, pair_mode] : {std::pair{ObjectiveMode::kNsp, PairMode::kNsp}, std::pair{ObjectiveMode::kBso, PairMode::kBso}}) {
    const auto pairs = build_corpus_pairs(d.corpus, d.window, 2, d.vocab_size, pair_mode);
    std::vector<Example> batch;
    for (std::size_t i = 0; i < 4; ++i) batch.push_back(prepare_pair(pairs[i], d.window, mode, d.vocab_size, i));
    EXPECT_NEAR(total_loss(batch, p, 1.0).total, ref.batch_loss(batch, 1.0), 1e-10);
  }
}

class FullGradient : public ::testing::TestWithParam<Coupling> {};

TEST_P(FullGradient, FiniteDifferenceAgreement) {
  const Coupling coupling = GetParam();
  auto d = toy::make_data(window_with(1, 1, 48), 6);
  auto p = EncoderParams<double>::init(toy::tiny_encoder(d, coupling), 1);
  toy::randomize(p, 0.5, 7);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < 2; ++i)
    batch.push_back(prepare_instance(d.instances[i], d.window, coupling, d.vocab_size, 77 + i));
  auto build = [&](nn::Tape<double>& tape, const std::vector<nn::Var<double>>& vars) {
    ForwardContext<double> ctx(tape, p, vars);
    return batch_loss(ctx, batch, 1.0);
  };
  const auto r = nn::finite_diff_check(build, p.params(), 1e-5, 200, 3);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_param;
}

INSTANTIATE_TEST_SUITE_P(AllCouplings, FullGradient,
                         ::testing::Values(Coupling::kCombined, Coupling::kIsolated, Coupling::kUni));

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_lowest(std::vector<double>{0, 0, 0}), 0);
  EXPECT_EQ(argmax_lowest(std::vector<double>{1, 3, 3}), 1);
  EXPECT_THROW(argmax_lowest(std::vector<double>{}), Error);
}

}  // namespace
}  // namespace conpono
