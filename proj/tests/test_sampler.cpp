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

#include <map>
#include <random>

#include <gtest/gtest.h>

#include "conpono/sampler.hpp"
#include "oracles.hpp"

namespace conpono {
namespace {

Corpus synthetic(std::size_t docs, std::uint64_t seed = 1, std::size_t* vocab_size = nullptr) {
  SyntheticConfig sc;
  sc.seed = seed;
  sc.num_docs = docs;
  auto text = generate_synthetic_corpus(sc);
  auto v = build_vocab(text, 5000);
  if (vocab_size) *vocab_size = v.size();
  return encode_corpus(text, v);
}

// Paragraph of n one-token sentences with distinct ids.
Paragraph numbered(int n, int base = 100) {
  Paragraph p;
  for (int i = 0; i < n; ++i) p.push_back({base + i});
  return p;
}

SpanRef span(int start, int end) { return {0, 0, start, end}; }

TEST(PlaceTarget, WorkedExampleFromOneBasedIndices) {
  // Anchor s7..s10 with k = -4 lands on s1..s3 (0-based 6..9 -> 0..2).
  auto t = place_target(span(6, 9), -4, WindowConfig{}, 16);
  ASSERT_TRUE(t);
  EXPECT_EQ(t->start, 0);
  EXPECT_EQ(t->end, 2);
}

TEST(PlaceTarget, ContiguousAndSkip) {
  auto t1 = place_target(span(0, 3), 1, WindowConfig{}, 16);
  EXPECT_EQ(t1->start, 4);
  EXPECT_EQ(t1->end, 6);
  auto t2 = place_target(span(0, 3), 2, WindowConfig{}, 16);
  EXPECT_EQ(t2->start, 5);
  EXPECT_EQ(t2->end, 7);
}

TEST(PlaceTarget, InfeasibleIsSignalled) {
  EXPECT_FALSE(place_target(span(0, 3), -1, WindowConfig{}, 16));
  EXPECT_FALSE(place_target(span(0, 3), 4, WindowConfig{}, 7));
  EXPECT_FALSE(place_target(span(0, 3), 0, WindowConfig{}, 16));
}

TEST(FeasibleK, WorkedExamples) {
  WindowConfig cfg;
  EXPECT_EQ(enumerate_feasible_k(16, span(6, 9), cfg), (std::vector<int>{-4, -3, -2, -1, 1, 2, 3, 4}));
  EXPECT_EQ(enumerate_feasible_k(7, span(0, 3), cfg), (std::vector<int>{1}));
  EXPECT_EQ(enumerate_feasible_k(7, span(3, 6), cfg), (std::vector<int>{-1}));
}

TEST(FeasibleK, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10000; ++trial) {
    WindowConfig cfg;
    cfg.K = std::uniform_int_distribution<int>(1, 4)(rng);
    cfg.ks_per_paragraph = std::min(cfg.ks_per_paragraph, 2 * cfg.K);
    cfg.anchor_len = std::uniform_int_distribution<int>(1, 5)(rng);
    cfg.target_len = std::uniform_int_distribution<int>(1, 4)(rng);
    const int n = std::uniform_int_distribution<int>(cfg.anchor_len, 24)(rng);
    const int s = std::uniform_int_distribution<int>(0, n - cfg.anchor_len)(rng);
    const auto got = enumerate_feasible_k(n, span(s, s + cfg.anchor_len - 1), cfg);
    ASSERT_EQ(got, oracle::feasible_k(n, s, s + cfg.anchor_len - 1, cfg.K, cfg.target_len)) << "trial " << trial;
  }
}

TEST(Pack, PairLayout) {
  auto p = pack_pair({5, 6}, {7}, 8);
  EXPECT_EQ(p.ids, (std::vector<TokenId>{2, 5, 6, 3, 7, 3, 0, 0}));
  EXPECT_EQ(p.segments, (std::vector<TokenId>{0, 0, 0, 0, 1, 1, 0, 0}));
  EXPECT_EQ(p.attention, (std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 0, 0}));
}

TEST(Pack, Single) {
  auto p = pack_single({5}, 4);
  EXPECT_EQ(p.ids, (std::vector<TokenId>{2, 5, 3, 0}));
  EXPECT_EQ(p.segments, (std::vector<TokenId>{0, 0, 0, 0}));
}

TEST(Pack, TruncatesFromTheEnd) {
  Sentence a(200), b(200);
  for (int i = 0; i < 200; ++i) {
    a[static_cast<std::size_t>(i)] = 10 + i;
    b[static_cast<std::size_t>(i)] = 1000 + i;
  }
  auto p = pack_pair(a, b, 128);
  ASSERT_EQ(p.ids.size(), 128u);
  EXPECT_EQ(p.ids.back(), kSep);
  EXPECT_EQ(p.ids[1], 10);  // anchor kept from its start
  EXPECT_EQ(std::count(p.ids.begin(), p.ids.end(), kSep), 2);
  EXPECT_EQ(std::count(p.attention.begin(), p.attention.end(), 1), 128);
  // The target still contributes at least one token.
  EXPECT_GE(std::count_if(p.ids.begin(), p.ids.end(), [](TokenId t) { return t >= 1000; }), 1);
}

TEST(Pack, OverlongAnchorNeverEmpty) {
  auto p = pack_pair(Sentence(300, 9), Sentence{7}, 16);
  EXPECT_EQ(p.ids.size(), 16u);
  EXPECT_EQ(p.ids[1], 9);
  EXPECT_EQ(p.ids.back(), kSep);
}

TEST(Masking, RoundingRule) {
  std::vector<TokenId> ids(20, 50);
  auto plan = apply_masking(ids, 0.15, 1, 100);
  EXPECT_EQ(plan.size(), 3u);
}

TEST(Masking, RateZeroIsIdentity) {
  std::vector<TokenId> ids = {2, 10, 11, 3};
  auto before = ids;
  EXPECT_TRUE(apply_masking(ids, 0.0, 1, 100).empty());
  EXPECT_EQ(ids, before);
}

TEST(Masking, SpecialsNeverSelectedAndPlanRecordsOriginals) {
  auto packed = pack_pair(Sentence(30, 77), Sentence(30, 88), 128);
  auto ids = packed.ids;
  auto plan = apply_masking(ids, 0.15, 9, 200);
  EXPECT_EQ(plan.size(), static_cast<std::size_t>(std::llround(0.15 * 60)));
  for (const auto& e : plan) {
    EXPECT_FALSE(is_special(packed.ids[static_cast<std::size_t>(e.position)]));
    EXPECT_EQ(e.original, packed.ids[static_cast<std::size_t>(e.position)]);
    EXPECT_EQ(ids[static_cast<std::size_t>(e.position)], e.replacement);
    if (e.action == MaskAction::kMask) { EXPECT_EQ(e.replacement, kMask); }
    if (e.action == MaskAction::kKeep) { EXPECT_EQ(e.replacement, e.original); }
    if (e.action == MaskAction::kRandom) { EXPECT_GE(e.replacement, kNumSpecials); }
  }
  auto replay = packed.ids;
  apply_plan(replay, plan);
  EXPECT_EQ(replay, ids);
}

TEST(Masking, ActionSplitIsEightyTenTen) {
  std::map<MaskAction, int> counts;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    std::vector<TokenId> ids(20, 50);
    for (const auto& e : apply_masking(ids, 0.15, s, 1000)) ++counts[e.action];
  }
  const double total = 12000;
  EXPECT_NEAR(counts[MaskAction::kMask] / total, 0.8, 0.02);
  EXPECT_NEAR(counts[MaskAction::kRandom] / total, 0.1, 0.015);
  EXPECT_NEAR(counts[MaskAction::kKeep] / total, 0.1, 0.015);
}

TEST(Masking, EpochsGiveDifferentPlans) {
  const std::size_t V = 2000;
  const double bound = oracle::plan_collision_probability(20, 3, V);
  EXPECT_LT(bound, 1e-3);
  int collisions = 0;
  const int trials = 5000;
  for (int t = 0; t < trials; ++t) {
    std::vector<TokenId> a(20, 60), b(20, 60);
    auto pa = apply_masking(a, 0.15, epoch_stream_seed(3, t, 0, 1), V);
    auto pb = apply_masking(b, 0.15, epoch_stream_seed(3, t, 0, 2), V);
    collisions += pa == pb;
  }
  // Expected about bound * trials ~ 1; allow generous slack.
  EXPECT_LE(collisions, 8);
}

TEST(EpochSeed, DistinctAcrossEpochs) {
  EXPECT_NE(epoch_stream_seed(1, 2, 3, 0), epoch_stream_seed(1, 2, 3, 1));
  EXPECT_EQ(epoch_stream_seed(1, 2, 3, 4), epoch_stream_seed(1, 2, 3, 4));
}

TEST(BuildInstances, SixteenSentenceParagraphDefaults) {
  std::size_t V = 0;
  Corpus c = synthetic(50, 1, &V);
  Paragraph para;
  std::int64_t doc = -1;
  int pidx = 0;
  for (const auto& d : c)
    for (std::size_t p = 0; p < d.paragraphs.size() && doc < 0; ++p)
      if (d.paragraphs[p].size() == 16) {
        para = d.paragraphs[p];
        doc = d.doc_id;
        pidx = static_cast<int>(p);
      }
  ASSERT_GE(doc, 0);
  SpanPool pool(c, 3);
  WindowConfig cfg;
  auto insts = build_instances(para, doc, pidx, cfg, 42, pool, V);
  ASSERT_GE(insts.size(), 1u);
  ASSERT_LE(insts.size(), 4u);
  for (const auto& inst : insts) {
    EXPECT_EQ(inst.candidates.size(), 32u);
    EXPECT_EQ(oracle::check_instance(inst, para, cfg), "");
    EXPECT_EQ(inst.mask_plan.size(), 33u);
  }
  EXPECT_EQ(insts, build_instances(para, doc, pidx, cfg, 42, pool, V));
}

TEST(BuildInstances, SingleFeasibleDistance) {
  // In an 8-sentence paragraph the anchors at s2..s5 and s4..s7 (1-based)
  // admit one distance each; the min rule then yields one instance.
  std::size_t V = 0;
  Corpus c = synthetic(5, 2, &V);
  c.push_back({9999, {numbered(8)}});
  SpanPool pool(c, 3);
  const WindowConfig cfg;
  const Paragraph para = numbered(8);
  int single = 0;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    auto insts = build_instances(para, 9999, 0, cfg, seed, pool, V);
    ASSERT_FALSE(insts.empty());
    const auto feasible = enumerate_feasible_k(8, insts[0].anchor, cfg);
    EXPECT_EQ(insts.size(), std::min<std::size_t>(4, feasible.size()));
    if (feasible.size() == 1) {
      EXPECT_EQ(insts.size(), 1u);
      ++single;
    }
  }
  EXPECT_GT(single, 0);
}

TEST(BuildInstances, TooShortParagraphIsSkipped) {
  std::size_t V = 0;
  Corpus c = synthetic(5, 2, &V);
  SpanPool pool(c, 3);
  EXPECT_TRUE(build_instances(numbered(7), 1, 0, WindowConfig{}, 1, pool, V).empty());
}

TEST(BuildInstances, ShortParagraphFallsBackToRandoms) {
  std::size_t V = 0;
  Corpus c = synthetic(5, 2, &V);
  c.push_back({9999, {numbered(8)}});
  SpanPool pool(c, 3);
  WindowConfig cfg;
  cfg.num_hard = 10;
  cfg.num_random = 21;
  for (const auto& inst : build_instances(numbered(8), 9999, 0, cfg, 4, pool, V)) {
    EXPECT_EQ(inst.candidates.size(), 32u);
    EXPECT_EQ(oracle::check_instance(inst, numbered(8), cfg), "");
  }
}

TEST(BuildInstances, CorpusInvariantsAndShortDistancesOversampled) {
  std::size_t V = 0;
  Corpus c = synthetic(250, 3, &V);  // 1,000 paragraphs
  WindowConfig cfg;
  auto insts = build_corpus_instances(c, cfg, 17, V);
  std::map<int, int> by_abs;
  std::map<std::int64_t, const Document*> docs;
  for (const auto& d : c) docs[d.doc_id] = &d;
  for (const auto& inst : insts) {
    const auto& para = docs.at(inst.anchor.doc_id)->paragraphs.at(static_cast<std::size_t>(inst.anchor.paragraph));
    ASSERT_EQ(oracle::check_instance(inst, para, cfg), "");
    ++by_abs[std::abs(inst.k)];
  }
  EXPECT_GE(by_abs[1], by_abs[4]);
  EXPECT_GT(by_abs[4], 0);
}

TEST(BuildInstances, JsonRoundTrip) {
  std::size_t V = 0;
  Corpus c = synthetic(10, 4, &V);
  auto insts = build_corpus_instances(c, WindowConfig{}, 5, V);
  ASSERT_FALSE(insts.empty());
  for (const auto& inst : insts) EXPECT_EQ(instance_from_json(instance_to_json(inst)), inst);
}

TEST(Pairs, BsoSwapsAndNspUsesOtherDocuments) {
  std::size_t V = 0;
  Corpus c = synthetic(40, 6, &V);
  WindowConfig cfg;
  int bso_pos = 0, bso_total = 0;
  for (const auto& p : build_corpus_pairs(c, cfg, 8, V, PairMode::kBso)) {
    ++bso_total;
    bso_pos += p.label;
    if (p.label == 1)
      EXPECT_EQ(p.first.start, p.second.end + 1);  // reversed order
    else
      EXPECT_EQ(p.second.start, p.first.end + 1);
    EXPECT_EQ(pair_from_json(pair_to_json(p)), p);
  }
  EXPECT_NEAR(static_cast<double>(bso_pos) / bso_total, 0.5, 0.1);
  for (const auto& p : build_corpus_pairs(c, cfg, 8, V, PairMode::kNsp)) {
    if (p.label == 1)
      EXPECT_NE(p.second.doc_id, p.first.doc_id);
    else
      EXPECT_EQ(p.second.doc_id, p.first.doc_id);
  }
}

TEST(Window, Validation) {
  WindowConfig cfg;
  cfg.K = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = WindowConfig{};
  cfg.ks_per_paragraph = 9;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace conpono
