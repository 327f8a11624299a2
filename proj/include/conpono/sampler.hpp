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

// Training-instance construction: anchor/target placement at a signed
// sentence distance, hard and random negatives, dynamic masking, and
// [CLS]/[SEP] packing. Also builds the NSP and BSO baseline pairs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "conpono/corpus.hpp"

namespace conpono {

struct WindowConfig {
  int K = 4;
  int anchor_len = 4;
  int target_len = 3;
  int ks_per_paragraph = 4;
  int num_hard = 3;
  int num_random = 28;
  double mask_rate = 0.15;
  int max_seq = 128;

  int num_candidates() const { return 1 + num_hard + num_random; }

  void validate() const {
    if (K < 1) fail("window: K must be >= 1, got ", K);
    if (anchor_len < 1 || target_len < 1) fail("window: anchor/target lengths must be >= 1");
    if (ks_per_paragraph < 1 || ks_per_paragraph > 2 * K)
      fail("window: ks_per_paragraph must lie in [1, 2K=", 2 * K, "], got ", ks_per_paragraph);
    if (num_hard < 0 || num_random < 0) fail("window: negative counts must be >= 0");
    if (mask_rate < 0.0 || mask_rate >= 1.0) fail("window: mask_rate must lie in [0,1), got ", mask_rate);
    if (max_seq < 5) fail("window: max_seq must be >= 5, got ", max_seq);
  }
};

inline void to_json(nlohmann::json& j, const WindowConfig& c) {
  j = {{"K", c.K},
       {"anchor_len", c.anchor_len},
       {"target_len", c.target_len},
       {"ks_per_paragraph", c.ks_per_paragraph},
       {"num_hard", c.num_hard},
       {"num_random", c.num_random},
       {"mask_rate", c.mask_rate},
       {"max_seq", c.max_seq}};
}
inline void from_json(const nlohmann::json& j, WindowConfig& c) {
  j.at("K").get_to(c.K);
  j.at("anchor_len").get_to(c.anchor_len);
  j.at("target_len").get_to(c.target_len);
  j.at("ks_per_paragraph").get_to(c.ks_per_paragraph);
  j.at("num_hard").get_to(c.num_hard);
  j.at("num_random").get_to(c.num_random);
  j.at("mask_rate").get_to(c.mask_rate);
  j.at("max_seq").get_to(c.max_seq);
}

/// Inclusive sentence range inside one paragraph.
struct SpanRef {
  std::int64_t doc_id = 0;
  int paragraph = 0;
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  friend bool operator==(const SpanRef&, const SpanRef&) = default;
};

inline void to_json(nlohmann::json& j, const SpanRef& s) {
  j = {{"doc_id", s.doc_id}, {"paragraph", s.paragraph}, {"start", s.start}, {"end", s.end}};
}
inline void from_json(const nlohmann::json& j, SpanRef& s) {
  j.at("doc_id").get_to(s.doc_id);
  j.at("paragraph").get_to(s.paragraph);
  j.at("start").get_to(s.start);
  j.at("end").get_to(s.end);
}

// ---------------------------------------------------------------------------
// Packing

/// One encoder input: token ids, segment ids and attention mask, all of
/// length max_seq.
struct PackedInput {
  std::vector<TokenId> ids;
  std::vector<TokenId> segments;
  std::vector<std::uint8_t> attention;

  /// Number of leading non-padding positions.
  std::size_t length() const {
    return static_cast<std::size_t>(std::count(attention.begin(), attention.end(), std::uint8_t{1}));
  }
  friend bool operator==(const PackedInput&, const PackedInput&) = default;
};

/// [CLS] span [SEP], span truncated from its end, padded to max_seq.
inline PackedInput pack_single(const Sentence& span, int max_seq) {
  if (span.empty()) fail("pack_single: empty span");
  if (max_seq < 3) fail("pack_single: max_seq must be >= 3");
  const std::size_t len = static_cast<std::size_t>(max_seq);
  const std::size_t keep = std::min(span.size(), len - 2);
  PackedInput p{std::vector<TokenId>(len, kPad), std::vector<TokenId>(len, 0), std::vector<std::uint8_t>(len, 0)};
  p.ids[0] = kCls;
  std::copy_n(span.begin(), keep, p.ids.begin() + 1);
  p.ids[keep + 1] = kSep;
  std::fill_n(p.attention.begin(), keep + 2, 1);
  return p;
}

/// [CLS] anchor [SEP] target [SEP] padded to max_seq. Overlong input is cut
/// from the end, keeping at least one token of each span.
inline PackedInput pack_pair(const Sentence& anchor, const Sentence& target, int max_seq) {
  if (anchor.empty() || target.empty()) fail("pack_pair: both spans must be non-empty");
  if (max_seq < 5) fail("pack_pair: max_seq must be >= 5");
  const std::size_t len = static_cast<std::size_t>(max_seq);
  const std::size_t budget = len - 3;
  const std::size_t a_keep = std::min(anchor.size(), budget - 1);
  const std::size_t b_keep = std::min(target.size(), budget - a_keep);
  PackedInput p{std::vector<TokenId>(len, kPad), std::vector<TokenId>(len, 0), std::vector<std::uint8_t>(len, 0)};
  std::size_t i = 0;
  p.ids[i++] = kCls;
  for (std::size_t j = 0; j < a_keep; ++j) p.ids[i++] = anchor[j];
  p.ids[i++] = kSep;
  const std::size_t second = i;
  for (std::size_t j = 0; j < b_keep; ++j) p.ids[i++] = target[j];
  p.ids[i++] = kSep;
  std::fill(p.segments.begin() + static_cast<std::ptrdiff_t>(second), p.segments.begin() + static_cast<std::ptrdiff_t>(i), 1);
  std::fill_n(p.attention.begin(), i, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Masking

enum class MaskAction : int { kMask = 0, kRandom = 1, kKeep = 2 };

struct MaskEntry {
  int position = 0;
  MaskAction action = MaskAction::kMask;
  TokenId original = 0;
  TokenId replacement = 0;  // id placed at `position`

  friend bool operator==(const MaskEntry&, const MaskEntry&) = default;
};
using MaskPlan = std::vector<MaskEntry>;

/// Selects round(rate * eligible) non-special positions without replacement
/// and applies the 80/10/10 mask/random/keep split. Returns the plan; `ids`
/// is rewritten in place.
inline MaskPlan apply_masking(std::vector<TokenId>& ids, double mask_rate, std::uint64_t seed,
                              std::size_t vocab_size) {
  std::vector<int> eligible;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!is_special(ids[i])) eligible.push_back(static_cast<int>(i));
  const auto n = static_cast<std::size_t>(std::llround(mask_rate * static_cast<double>(eligible.size())));
  if (n == 0) return {};
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) fail("apply_masking: vocabulary has no regular tokens");
  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(n);
  std::sort(eligible.begin(), eligible.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<TokenId> random_id(kNumSpecials, static_cast<TokenId>(vocab_size - 1));
  MaskPlan plan;
  plan.reserve(n);
  for (int pos : eligible) {
    MaskEntry e;
    e.position = pos;
    e.original = ids[static_cast<std::size_t>(pos)];
    const double r = u(rng);
    if (r < 0.8) {
      e.action = MaskAction::kMask;
      e.replacement = kMask;
    } else if (r < 0.9) {
      e.action = MaskAction::kRandom;
      e.replacement = random_id(rng);
    } else {
      e.action = MaskAction::kKeep;
      e.replacement = e.original;
    }
    ids[static_cast<std::size_t>(pos)] = e.replacement;
    plan.push_back(e);
  }
  return plan;
}

/// Re-applies a stored plan to freshly packed ids.
inline void apply_plan(std::vector<TokenId>& ids, const MaskPlan& plan) {
  for (const MaskEntry& e : plan) {
    if (e.position < 0 || static_cast<std::size_t>(e.position) >= ids.size() ||
        ids[static_cast<std::size_t>(e.position)] != e.original)
      fail("mask plan does not match input at position ", e.position);
    ids[static_cast<std::size_t>(e.position)] = e.replacement;
  }
}

// ---------------------------------------------------------------------------
// Placement

/// Target span at signed distance k: k is the index difference between the
/// anchor's and the target's near boundary sentences, so |k| - 1 sentences
/// lie between them. Infeasible placements return nullopt.
inline std::optional<SpanRef> place_target(const SpanRef& anchor, int k, const WindowConfig& cfg,
                                           int paragraph_len) {
  if (k == 0 || std::abs(k) > cfg.K) return std::nullopt;
  SpanRef t = anchor;
  if (k < 0) {
    t.end = anchor.start + k;
    t.start = t.end - cfg.target_len + 1;
  } else {
    t.start = anchor.end + k;
    t.end = t.start + cfg.target_len - 1;
  }
  if (t.start < 0 || t.end >= paragraph_len) return std::nullopt;
  return t;
}

/// Signed distances in ascending order for which place_target succeeds.
inline std::vector<int> enumerate_feasible_k(int paragraph_len, const SpanRef& anchor, const WindowConfig& cfg) {
  std::vector<int> ks;
  // Negative side: target.start = anchor.start + k - target_len + 1 >= 0.
  const int min_neg = std::max(-cfg.K, cfg.target_len - 1 - anchor.start);
  for (int k = min_neg; k <= -1; ++k) ks.push_back(k);
  // Positive side: target.end = anchor.end + k + target_len - 1 < paragraph_len.
  const int max_pos = std::min(cfg.K, paragraph_len - cfg.target_len - anchor.end);
  for (int k = 1; k <= max_pos; ++k) ks.push_back(k);
  return ks;
}

// ---------------------------------------------------------------------------
// Instances

enum class Provenance { kTrue, kHard, kRandom };

inline std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kTrue: return "true";
    case Provenance::kHard: return "hard";
    case Provenance::kRandom: return "random";
  }
  return "?";
}
inline Provenance provenance_from_name(const std::string& s) {
  if (s == "true") return Provenance::kTrue;
  if (s == "hard") return Provenance::kHard;
  if (s == "random") return Provenance::kRandom;
  fail("unknown candidate provenance: ", s);
}

struct Candidate {
  Sentence ids;
  Provenance provenance = Provenance::kRandom;
  SpanRef origin;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct TrainingInstance {
  SpanRef anchor;
  Sentence anchor_ids;
  int k = 0;
  std::vector<Candidate> candidates;
  int true_index = 0;
  /// One plan per encoded input of the pair layout: entry 0 is the
  /// anchor-alone pass, entry 1 + j the (anchor, candidate j) pass.
  std::vector<MaskPlan> mask_plan;

  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

/// Per-paragraph stream seed for a given epoch.
inline std::uint64_t epoch_stream_seed(std::uint64_t global_seed, std::int64_t doc_id, int paragraph,
                                       std::int64_t epoch) {
  return hash_seed({global_seed, static_cast<std::uint64_t>(doc_id), static_cast<std::uint64_t>(paragraph),
                    static_cast<std::uint64_t>(epoch)});
}

/// Flattens a span's sentences into one token list.
inline Sentence span_tokens(const Paragraph& para, const SpanRef& s) {
  Sentence out;
  for (int i = s.start; i <= s.end; ++i) {
    const Sentence& sent = para.at(static_cast<std::size_t>(i));
    out.insert(out.end(), sent.begin(), sent.end());
  }
  return out;
}

/// Every span of a fixed length across a corpus, sampled uniformly.
class SpanPool {
 public:
  SpanPool(const Corpus& corpus, int span_len) : corpus_(&corpus), span_len_(span_len) {
    for (std::size_t d = 0; d < corpus.size(); ++d)
      for (std::size_t p = 0; p < corpus[d].paragraphs.size(); ++p) {
        const int n = static_cast<int>(corpus[d].paragraphs[p].size()) - span_len + 1;
        if (n <= 0) continue;
        entries_.push_back({d, p, total_});
        total_ += static_cast<std::uint64_t>(n);
      }
  }

  std::uint64_t total() const { return total_; }

  /// Uniform over all spans whose document differs from `exclude_doc`.
  SpanRef sample(std::mt19937_64& rng, std::int64_t exclude_doc) const {
    if (total_ == 0) fail("span pool is empty");
    std::uniform_int_distribution<std::uint64_t> pick(0, total_ - 1);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const std::uint64_t r = pick(rng);
      auto it = std::upper_bound(entries_.begin(), entries_.end(), r,
                                 [](std::uint64_t v, const Entry& e) { return v < e.first; });
      const Entry& e = *std::prev(it);
      const Document& doc = (*corpus_)[e.doc];
      if (doc.doc_id == exclude_doc) continue;
      const int start = static_cast<int>(r - e.first);
      return {doc.doc_id, static_cast<int>(e.para), start, start + span_len_ - 1};
    }
    fail("no span outside document ", exclude_doc, " (the corpus needs at least two documents)");
  }

  Sentence tokens(const SpanRef& s) const {
    for (const Document& d : *corpus_)
      if (d.doc_id == s.doc_id) return span_tokens(d.paragraphs.at(static_cast<std::size_t>(s.paragraph)), s);
    fail("span refers to unknown document ", s.doc_id);
  }

  const Document& document_at(std::size_t i) const { return (*corpus_)[i]; }

 private:
  struct Entry {
    std::size_t doc;
    std::size_t para;
    std::uint64_t first;
  };
  const Corpus* corpus_;
  int span_len_;
  std::vector<Entry> entries_;
  std::uint64_t total_ = 0;
};

/// Candidate inputs of the pair layout (anchor-alone, then one pair per
/// candidate), unmasked.
inline std::vector<PackedInput> pair_layout_inputs(const TrainingInstance& inst, int max_seq) {
  std::vector<PackedInput> out;
  out.reserve(inst.candidates.size() + 1);
  out.push_back(pack_single(inst.anchor_ids, max_seq));
  for (const Candidate& c : inst.candidates) out.push_back(pack_pair(inst.anchor_ids, c.ids, max_seq));
  return out;
}

/// Masks every input independently; input i uses a seed derived from the
/// stream seed, the instance's k and i.
inline std::vector<MaskPlan> mask_inputs(std::vector<PackedInput>& inputs, double rate, std::uint64_t stream_seed,
                                         int k, std::size_t vocab_size) {
  std::vector<MaskPlan> plans;
  plans.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    plans.push_back(apply_masking(inputs[i].ids, rate,
                                  hash_seed({stream_seed, static_cast<std::uint64_t>(k + 1024), i, 0x3a5cULL}),
                                  vocab_size));
  return plans;
}

/// All training instances for one paragraph (empty if the paragraph is too
/// short). A pure function of its arguments.
inline std::vector<TrainingInstance> build_instances(const Paragraph& para, std::int64_t doc_id, int paragraph_index,
                                                     const WindowConfig& cfg, std::uint64_t stream_seed,
                                                     const SpanPool& pool, std::size_t vocab_size) {
  cfg.validate();
  const int n = static_cast<int>(para.size());
  if (n < cfg.anchor_len + cfg.target_len + 1) return {};
  std::mt19937_64 rng(stream_seed);

  std::vector<int> starts;
  for (int s = 0; s + cfg.anchor_len <= n; ++s) {
    SpanRef a{doc_id, paragraph_index, s, s + cfg.anchor_len - 1};
    if (!enumerate_feasible_k(n, a, cfg).empty()) starts.push_back(s);
  }
  if (starts.empty()) return {};
  const int s = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
  const SpanRef anchor{doc_id, paragraph_index, s, s + cfg.anchor_len - 1};
  const std::vector<int> feasible = enumerate_feasible_k(n, anchor, cfg);

  std::vector<int> ks = feasible;
  std::shuffle(ks.begin(), ks.end(), rng);
  ks.resize(std::min<std::size_t>(static_cast<std::size_t>(cfg.ks_per_paragraph), ks.size()));
  std::sort(ks.begin(), ks.end());

  const Sentence anchor_ids = span_tokens(para, anchor);
  std::vector<TrainingInstance> out;
  for (int k : ks) {
    const SpanRef target = *place_target(anchor, k, cfg, n);
    TrainingInstance inst;
    inst.anchor = anchor;
    inst.anchor_ids = anchor_ids;
    inst.k = k;
    inst.candidates.push_back({span_tokens(para, target), Provenance::kTrue, target});

    // Hard negatives: spans at the other feasible distances first, then any
    // other same-paragraph span.
    std::vector<SpanRef> preferred, fallback;
    for (int other : feasible)
      if (other != k) preferred.push_back(*place_target(anchor, other, cfg, n));
    for (int st = 0; st + cfg.target_len <= n; ++st) {
      SpanRef sp{doc_id, paragraph_index, st, st + cfg.target_len - 1};
      if (sp == target || std::find(preferred.begin(), preferred.end(), sp) != preferred.end()) continue;
      fallback.push_back(sp);
    }
    std::shuffle(preferred.begin(), preferred.end(), rng);
    std::shuffle(fallback.begin(), fallback.end(), rng);
    int hard = 0;
    for (auto* src : {&preferred, &fallback})
      for (const SpanRef& sp : *src) {
        if (hard == cfg.num_hard) break;
        inst.candidates.push_back({span_tokens(para, sp), Provenance::kHard, sp});
        ++hard;
      }
    const int randoms = cfg.num_random + (cfg.num_hard - hard);
    for (int r = 0; r < randoms; ++r) {
      const SpanRef sp = pool.sample(rng, doc_id);
      inst.candidates.push_back({pool.tokens(sp), Provenance::kRandom, sp});
    }

    std::shuffle(inst.candidates.begin(), inst.candidates.end(), rng);
    for (std::size_t j = 0; j < inst.candidates.size(); ++j)
      if (inst.candidates[j].provenance == Provenance::kTrue) inst.true_index = static_cast<int>(j);

    auto inputs = pair_layout_inputs(inst, cfg.max_seq);
    inst.mask_plan = mask_inputs(inputs, cfg.mask_rate, stream_seed, k, vocab_size);
    out.push_back(std::move(inst));
  }
  return out;
}

/// Instances for a whole corpus, ordered by (doc_id, paragraph, k).
inline std::vector<TrainingInstance> build_corpus_instances(const Corpus& corpus, const WindowConfig& cfg,
                                                            std::uint64_t seed, std::size_t vocab_size) {
  SpanPool pool(corpus, cfg.target_len);
  std::vector<TrainingInstance> out;
  for (const Document& d : corpus)
    for (std::size_t p = 0; p < d.paragraphs.size(); ++p) {
      auto insts = build_instances(d.paragraphs[p], d.doc_id, static_cast<int>(p), cfg,
                                   epoch_stream_seed(seed, d.doc_id, static_cast<int>(p), 0), pool, vocab_size);
      for (auto& i : insts) out.push_back(std::move(i));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline pairs

enum class PairMode { kNsp, kBso };

/// Two spans and a binary label. NSP: 1 = second span comes from another
/// document. BSO: 1 = contiguous spans presented in reverse order.
struct PairInstance {
  SpanRef first;
  SpanRef second;
  Sentence first_ids;
  Sentence second_ids;
  int label = 0;
  MaskPlan mask_plan;

  friend bool operator==(const PairInstance&, const PairInstance&) = default;
};

inline std::vector<PairInstance> build_pair_instances(const Paragraph& para, std::int64_t doc_id, int paragraph_index,
                                                      const WindowConfig& cfg, std::uint64_t stream_seed,
                                                      const SpanPool& pool, std::size_t vocab_size, PairMode mode) {
  cfg.validate();
  const int n = static_cast<int>(para.size());
  if (n < cfg.anchor_len + cfg.target_len + 1) return {};
  std::mt19937_64 rng(hash_seed({stream_seed, mode == PairMode::kNsp ? 0x45ULL : 0xb5ULL}));
  std::uniform_int_distribution<int> start(0, n - cfg.anchor_len - cfg.target_len);
  std::bernoulli_distribution coin(0.5);
  std::vector<PairInstance> out;
  for (int i = 0; i < cfg.ks_per_paragraph; ++i) {
    const int s = start(rng);
    SpanRef a{doc_id, paragraph_index, s, s + cfg.anchor_len - 1};
    SpanRef b{doc_id, paragraph_index, a.end + 1, a.end + cfg.target_len};
    PairInstance inst;
    inst.label = coin(rng) ? 1 : 0;
    if (mode == PairMode::kBso) {
      if (inst.label == 1) std::swap(a, b);
      inst.first = a;
      inst.second = b;
      inst.first_ids = span_tokens(para, a);
      inst.second_ids = span_tokens(para, b);
    } else {
      inst.first = a;
      inst.first_ids = span_tokens(para, a);
      inst.second = inst.label == 1 ? pool.sample(rng, doc_id) : b;
      inst.second_ids = inst.label == 1 ? pool.tokens(inst.second) : span_tokens(para, b);
    }
    PackedInput packed = pack_pair(inst.first_ids, inst.second_ids, cfg.max_seq);
    inst.mask_plan = apply_masking(packed.ids, cfg.mask_rate, hash_seed({stream_seed, static_cast<std::uint64_t>(i), 0x9a1eULL}),
                                   vocab_size);
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<PairInstance> build_corpus_pairs(const Corpus& corpus, const WindowConfig& cfg, std::uint64_t seed,
                                                    std::size_t vocab_size, PairMode mode) {
  // NSP negatives are full target-length spans from other documents.
  SpanPool pool(corpus, cfg.target_len);
  std::vector<PairInstance> out;
  for (const Document& d : corpus)
    for (std::size_t p = 0; p < d.paragraphs.size(); ++p) {
      auto insts = build_pair_instances(d.paragraphs[p], d.doc_id, static_cast<int>(p), cfg,
                                        epoch_stream_seed(seed, d.doc_id, static_cast<int>(p), 0), pool, vocab_size,
                                        mode);
      for (auto& i : insts) out.push_back(std::move(i));
    }
  return out;
}

// ---------------------------------------------------------------------------
// JSON Lines

namespace detail {
inline nlohmann::json plan_to_json(const MaskPlan& plan) {
  nlohmann::json arr = nlohmann::json::array();
  for (const MaskEntry& e : plan) arr.push_back({e.position, static_cast<int>(e.action), e.original, e.replacement});
  return arr;
}
inline MaskPlan plan_from_json(const nlohmann::json& j) {
  MaskPlan plan;
  for (const auto& e : j) {
    const int action = e.at(1).get<int>();
    if (action < 0 || action > 2) fail("mask plan action must be 0, 1 or 2, got ", action);
    plan.push_back({e.at(0).get<int>(), static_cast<MaskAction>(action), e.at(2).get<TokenId>(), e.at(3).get<TokenId>()});
  }
  return plan;
}
}  // namespace detail

inline nlohmann::json instance_to_json(const TrainingInstance& inst) {
  nlohmann::json cands = nlohmann::json::array();
  for (const Candidate& c : inst.candidates)
    cands.push_back({{"ids", c.ids}, {"provenance", provenance_name(c.provenance)}, {"origin", c.origin}});
  nlohmann::json plans = nlohmann::json::array();
  for (const MaskPlan& p : inst.mask_plan) plans.push_back(detail::plan_to_json(p));
  return {{"anchor", inst.anchor},       {"anchor_ids", inst.anchor_ids}, {"k", inst.k},
          {"candidates", cands},         {"true_index", inst.true_index}, {"mask_plan", plans}};
}

inline TrainingInstance instance_from_json(const nlohmann::json& j) {
  TrainingInstance inst;
  try {
    inst.anchor = j.at("anchor").get<SpanRef>();
    inst.anchor_ids = j.at("anchor_ids").get<Sentence>();
    inst.k = j.at("k").get<int>();
    for (const auto& c : j.at("candidates"))
      inst.candidates.push_back({c.at("ids").get<Sentence>(), provenance_from_name(c.at("provenance").get<std::string>()),
                                 c.at("origin").get<SpanRef>()});
    inst.true_index = j.at("true_index").get<int>();
    for (const auto& p : j.at("mask_plan")) inst.mask_plan.push_back(detail::plan_from_json(p));
  } catch (const nlohmann::json::exception& e) {
    fail("malformed training instance: ", e.what());
  }
  if (inst.true_index < 0 || static_cast<std::size_t>(inst.true_index) >= inst.candidates.size())
    fail("training instance true_index ", inst.true_index, " out of range");
  return inst;
}

inline nlohmann::json pair_to_json(const PairInstance& p) {
  return {{"first", p.first},   {"second", p.second}, {"first_ids", p.first_ids}, {"second_ids", p.second_ids},
          {"label", p.label},   {"mask_plan", detail::plan_to_json(p.mask_plan)}};
}

inline PairInstance pair_from_json(const nlohmann::json& j) {
  PairInstance p;
  try {
    p.first = j.at("first").get<SpanRef>();
    p.second = j.at("second").get<SpanRef>();
    p.first_ids = j.at("first_ids").get<Sentence>();
    p.second_ids = j.at("second_ids").get<Sentence>();
    p.label = j.at("label").get<int>();
    p.mask_plan = detail::plan_from_json(j.at("mask_plan"));
  } catch (const nlohmann::json::exception& e) {
    fail("malformed pair instance: ", e.what());
  }
  return p;
}

}  // namespace conpono
