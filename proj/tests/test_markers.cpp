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

#include <gtest/gtest.h>

#include "marker_fixture.hpp"

namespace conpono {
namespace {

using fixture::marker_examples;
using fixture::marker_predictions_a;
using fixture::marker_predictions_b;
using fixture::marker_stats;

TEST(Markers, HandWorkedTable) {
  const auto t = marker_analysis(marker_examples(), marker_predictions_a(), marker_predictions_b(), marker_stats());
  EXPECT_FALSE(t.no_disagreements);
  EXPECT_EQ(t.markers.size(), 13u);
  EXPECT_EQ(t.training_tokens, 100u);

  const auto& a = t.a_only.all;
  EXPECT_EQ(a.examples, 4u);
  EXPECT_EQ(a.tokens, 16u);
  EXPECT_EQ(a.counts.at("but"), 3u);
  EXPECT_EQ(a.counts.at("so"), 1u);
  EXPECT_EQ(a.rate_change.size(), 2u);  // markers absent from training are skipped
  EXPECT_DOUBLE_EQ(a.rate_change.at("but"), 0.875);
  EXPECT_DOUBLE_EQ(a.rate_change.at("so"), 0.25);
  EXPECT_DOUBLE_EQ(*a.weighted_change, 2.0 / 3.0);

  EXPECT_DOUBLE_EQ(t.a_only.first_sentence.rate_change.at("but"), 2.75);
  EXPECT_DOUBLE_EQ(t.a_only.first_sentence.rate_change.at("so"), -1.0);
  EXPECT_DOUBLE_EQ(*t.a_only.first_sentence.weighted_change, 1.5);
  EXPECT_DOUBLE_EQ(*t.a_only.second_sentence.weighted_change, -1.0 / 6.0);

  const auto& b = t.b_only.all;
  EXPECT_EQ(b.examples, 4u);
  EXPECT_EQ(b.counts.at("then"), 1u);
  EXPECT_DOUBLE_EQ(b.rate_change.at("but"), -0.375);
  EXPECT_DOUBLE_EQ(b.rate_change.at("so"), 1.5);
  EXPECT_DOUBLE_EQ(*b.weighted_change, 0.25);
}

TEST(Markers, IdenticalPredictionsGiveEmptySets) {
  const auto t = marker_analysis(marker_examples(), marker_predictions_a(), marker_predictions_a(), marker_stats());
  EXPECT_TRUE(t.no_disagreements);
  EXPECT_EQ(t.a_only.all.examples, 0u);
  EXPECT_EQ(t.b_only.all.examples, 0u);
  EXPECT_FALSE(t.a_only.all.weighted_change.has_value());
  EXPECT_TRUE(t.to_json()["a_correct_b_wrong"]["all"]["weighted_change"].is_null());
}

TEST(Markers, IdSetMismatchIsAnError) {
  auto b = marker_predictions_b();
  b.pop_back();
  EXPECT_THROW(marker_analysis(marker_examples(), marker_predictions_a(), b, marker_stats()), Error);
  b = marker_predictions_b();
  b.back().id = 99;
  EXPECT_THROW(marker_analysis(marker_examples(), marker_predictions_a(), b, marker_stats()), Error);
  b = marker_predictions_b();
  b.back().id = 0;
  EXPECT_THROW(marker_analysis(marker_examples(), marker_predictions_a(), b, marker_stats()), Error);
}

TEST(Markers, PredictionFileParsing) {
  const auto p = predictions_from_jsonl("{\"id\":3,\"pred\":1}\n\n{\"id\":4,\"pred\":0}\n");
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].id, 4);
  EXPECT_THROW(predictions_from_jsonl("{\"id\":3}\n"), Error);
}

TEST(Markers, JsonShape) {
  const auto j =
      marker_analysis(marker_examples(), marker_predictions_a(), marker_predictions_b(), marker_stats()).to_json();
  EXPECT_EQ(j["b_correct_a_wrong"]["all"]["weighted_change"], 0.25);
  EXPECT_EQ(j["training_counts"]["but"], 10);
  EXPECT_FALSE(j["no_disagreements"]);
}

}  // namespace
}  // namespace conpono
