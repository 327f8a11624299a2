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

// Discourse-marker frequency in the examples two models disagree on.
//
// For a set of examples and a marker m:
//   rate(m)   = occurrences of m / tokens in the set
//   base(m)   = training count of m / training tokens
//   change(m) = rate(m) / base(m) - 1
// The summary is sum_m count(m) * change(m) / sum_m count(m) over markers
// with a nonzero training count.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "conpono/probe.hpp"

namespace conpono {

struct Prediction {
  std::int64_t id = 0;
  int pred = 0;
};

inline std::vector<Prediction> predictions_from_jsonl(std::string_view text) {
  std::vector<Prediction> out;
  detail::for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back({j.at("id").get<std::int64_t>(), j.at("pred").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      fail("prediction line ", line, ": ", e.what());
    }
  });
  return out;
}

/// Which sentences of each example are counted.
enum class MarkerScope { kAll, kFirst, kSecond };

struct MarkerSetSummary {
  std::size_t examples = 0;
  std::uint64_t tokens = 0;
  std::map<std::string, std::uint64_t> counts;
  std::map<std::string, double> rate_change;
  std::optional<double> weighted_change;  // absent when the set is empty
};

struct MarkerSet {
  MarkerSetSummary all, first_sentence, second_sentence;
};

struct MarkerTable {
  std::vector<std::string> markers;
  std::map<std::string, std::uint64_t> training_counts;
  std::uint64_t training_tokens = 0;
  MarkerSet a_only;  // model A correct, model B wrong
  MarkerSet b_only;  // model B correct, model A wrong
  bool no_disagreements = true;

  nlohmann::json to_json() const {
    auto summary = [](const MarkerSetSummary& s) {
      nlohmann::json j = {{"examples", s.examples}, {"tokens", s.tokens}, {"counts", s.counts},
                          {"rate_change", s.rate_change}};
      j["weighted_change"] = s.weighted_change ? nlohmann::json(*s.weighted_change) : nlohmann::json(nullptr);
      return j;
    };
    auto set = [&](const MarkerSet& m) {
      return nlohmann::json{{"all", summary(m.all)},
                            {"first_sentence", summary(m.first_sentence)},
                            {"second_sentence", summary(m.second_sentence)}};
    };
    return {{"markers", markers},
            {"training_counts", training_counts},
            {"training_tokens", training_tokens},
            {"a_correct_b_wrong", set(a_only)},
            {"b_correct_a_wrong", set(b_only)},
            {"no_disagreements", no_disagreements}};
  }
};

namespace detail {
inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}
}  // namespace detail

/// Rate summary of one example set against training counts.
inline MarkerSetSummary summarize_markers(const std::vector<const ProbeExample*>& set, const CorpusStats& stats,
                                          MarkerScope scope) {
  std::map<std::size_t, std::string> id_to_marker;
  for (std::size_t id = 0; id < stats.tokens.size(); ++id) {
    const std::string t = detail::lower(stats.tokens[id]);
    for (auto m : kDiscourseMarkers)
      if (t == m) id_to_marker[id] = std::string(m);
  }
  MarkerSetSummary s;
  s.examples = set.size();
  for (auto m : kDiscourseMarkers) s.counts[std::string(m)] = 0;
  for (const ProbeExample* e : set) {
    for (std::size_t i = 0; i < e->sentences.size(); ++i) {
      if (scope == MarkerScope::kFirst && i != 0) continue;
      if (scope == MarkerScope::kSecond && i != 1) continue;
      for (TokenId id : e->sentences[i]) {
        ++s.tokens;
        auto it = id_to_marker.find(static_cast<std::size_t>(id));
        if (it != id_to_marker.end()) ++s.counts[it->second];
      }
    }
  }
  if (s.examples == 0 || s.tokens == 0 || stats.total_tokens == 0) return s;
  double num = 0.0, den = 0.0;
  for (auto m : kDiscourseMarkers) {
    const std::string key(m);
    const std::uint64_t train = stats.count(key);
    if (train == 0) continue;
    const double rate = static_cast<double>(s.counts[key]) / static_cast<double>(s.tokens);
    const double base = static_cast<double>(train) / static_cast<double>(stats.total_tokens);
    const double change = rate / base - 1.0;
    s.rate_change[key] = change;
    num += static_cast<double>(train) * change;
    den += static_cast<double>(train);
  }
  if (den > 0.0) s.weighted_change = num / den;
  return s;
}

/// Compares two prediction files over the same example ids.
inline MarkerTable marker_analysis(const std::vector<ProbeExample>& examples, const std::vector<Prediction>& preds_a,
                                   const std::vector<Prediction>& preds_b, const CorpusStats& stats) {
  std::map<std::int64_t, const ProbeExample*> by_id;
  for (const auto& e : examples)
    if (!by_id.emplace(e.id, &e).second) fail("probe file repeats example id ", e.id);
  auto index = [&](const std::vector<Prediction>& ps, const char* which) {
    std::map<std::int64_t, int> m;
    for (const auto& p : ps) {
      if (!by_id.contains(p.id)) fail("predictions ", which, " reference unknown example id ", p.id);
      if (!m.emplace(p.id, p.pred).second) fail("predictions ", which, " repeat example id ", p.id);
    }
    return m;
  };
  const auto a = index(preds_a, "A");
  const auto b = index(preds_b, "B");
  if (a.size() != b.size()) fail("prediction files cover different ids: A has ", a.size(), ", B has ", b.size());
  for (const auto& [id, _] : a)
    if (!b.contains(id)) fail("example id ", id, " is in predictions A but not in predictions B");

  std::vector<const ProbeExample*> a_only, b_only;
  for (const auto& [id, pa] : a) {
    const ProbeExample* e = by_id.at(id);
    const bool ca = pa == e->label;
    const bool cb = b.at(id) == e->label;
    if (ca && !cb) a_only.push_back(e);
    if (cb && !ca) b_only.push_back(e);
  }

  MarkerTable t;
  for (auto m : kDiscourseMarkers) {
    t.markers.emplace_back(m);
    t.training_counts[std::string(m)] = stats.count(m);
  }
  t.training_tokens = stats.total_tokens;
  auto fill = [&](MarkerSet& set, const std::vector<const ProbeExample*>& xs) {
    set.all = summarize_markers(xs, stats, MarkerScope::kAll);
    set.first_sentence = summarize_markers(xs, stats, MarkerScope::kFirst);
    set.second_sentence = summarize_markers(xs, stats, MarkerScope::kSecond);
  };
  fill(t.a_only, a_only);
  fill(t.b_only, b_only);
  t.no_disagreements = a_only.empty() && b_only.empty();
  return t;
}

}  // namespace conpono
