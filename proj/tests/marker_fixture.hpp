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

// Hand-built ten-example disagreement set with its worked rate changes.
//
// Vocabulary after the specials: 5 "but", 6 "so", 7 "then", 8 "x".
// Training counts: but 10, so 5, then 0, x 85 (100 tokens). "then" and the
// other markers never occur in training, so they carry no rate change.
//
// Every label is 0. A is right on ids 0-5, B on ids 4-9, so
// A-only = {0,1,2,3} and B-only = {6,7,8,9}.
//
// A-only, all sentences: 16 tokens, but 3, so 1.
//   but 3/16 / 0.10 - 1 = 0.875, so 1/16 / 0.05 - 1 = 0.25
//   weighted (10*0.875 + 5*0.25) / 15 = 2/3
// A-only, first sentence: 8 tokens, but 3, so 0.
//   but 2.75, so -1, weighted (27.5 - 5) / 15 = 1.5
// A-only, second sentence: 8 tokens, but 0, so 1.
//   but -1, so 1.5, weighted (-10 + 7.5) / 15 = -1/6
// B-only, all sentences: 16 tokens, but 1, so 2.
//   but -0.375, so 1.5, weighted (-3.75 + 7.5) / 15 = 0.25

#pragma once

#include "conpono/markers.hpp"

namespace conpono::fixture {

inline CorpusStats marker_stats() {
  CorpusStats s;
  s.documents = 1;
  s.tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "but", "so", "then", "x"};
  s.token_counts = {0, 0, 0, 0, 0, 10, 5, 0, 85};
  s.total_tokens = 100;
  return s;
}

inline std::vector<ProbeExample> marker_examples() {
  const std::vector<std::pair<Sentence, Sentence>> pairs = {
      {{5, 8}, {8, 8}},  {{8}, {6, 8}},   {{5, 5, 8}, {8}}, {{8, 8}, {8, 8, 8}}, {{5}, {6}},
      {{5}, {6}},        {{7, 8}, {8}},   {{6, 6}, {8, 8}}, {{8}, {5, 8, 8, 8}}, {{8, 8, 8}, {8}},
  };
  std::vector<ProbeExample> xs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ProbeExample e;
    e.task = ProbeTask::kBso;
    e.id = static_cast<std::int64_t>(i);
    e.label = 0;
    e.train = false;
    e.sentences = {pairs[i].first, pairs[i].second};
    xs.push_back(e);
  }
  return xs;
}

inline std::vector<Prediction> marker_predictions_a() {
  std::vector<Prediction> p;
  for (int i = 0; i < 10; ++i) p.push_back({i, i <= 5 ? 0 : 1});
  return p;
}

inline std::vector<Prediction> marker_predictions_b() {
  std::vector<Prediction> p;
  for (int i = 0; i < 10; ++i) p.push_back({i, i >= 4 ? 0 : 1});
  return p;
}

}  // namespace conpono::fixture
