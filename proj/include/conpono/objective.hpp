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

// Losses: the sampled-softmax distance objective over a candidate set, the
// auxiliary masked-token loss, and the NSP/BSO pair baselines.

#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "conpono/encoder.hpp"

namespace conpono {

enum class ObjectiveMode { kConpono, kNsp, kBso };

inline std::string objective_name(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::kConpono: return "conpono";
    case ObjectiveMode::kNsp: return "nsp";
    case ObjectiveMode::kBso: return "bso";
  }
  return "?";
}
inline ObjectiveMode objective_from_name(const std::string& s) {
  if (s == "conpono") return ObjectiveMode::kConpono;
  if (s == "nsp") return ObjectiveMode::kNsp;
  if (s == "bso") return ObjectiveMode::kBso;
  fail("unknown objective \"", s, "\" (expected conpono, nsp or bso)");
}

/// A training instance packed and masked for one coupling.
struct PreparedInstance {
  std::optional<PackedInput> anchor;  // absent under uni coupling
  std::vector<PackedInput> candidates;
  int true_index = 0;
  int k = 0;
  /// Input carrying the masked-token loss: the joint (anchor, true target)
  /// pass, or the anchor-alone pass under isolated coupling where no joint
  /// pass exists.
  int mlm_candidate = -1;  // -1 selects the anchor-alone input
  MaskPlan mlm_plan;
};

/// A baseline pair packed and masked.
struct PreparedPair {
  ObjectiveMode mode = ObjectiveMode::kBso;
  PackedInput input;
  int label = 0;
  MaskPlan plan;
};

using Example = std::variant<PreparedInstance, PreparedPair>;

/// Packs an instance for `coupling`. Without a stream seed the stored
/// pair-layout plans are replayed (combined/uni only); with one, every input
/// is masked afresh from that seed.
inline PreparedInstance prepare_instance(const TrainingInstance& inst, const WindowConfig& window, Coupling coupling,
                                         std::size_t vocab_size, std::optional<std::uint64_t> stream_seed) {
  std::vector<PackedInput> inputs;
  inputs.reserve(inst.candidates.size() + 1);
  inputs.push_back(pack_single(inst.anchor_ids, window.max_seq));
  for (const Candidate& c : inst.candidates)
    inputs.push_back(coupling == Coupling::kIsolated ? pack_single(c.ids, window.max_seq)
                                                     : pack_pair(inst.anchor_ids, c.ids, window.max_seq));
  std::vector<MaskPlan> plans;
  if (stream_seed) {
    plans = mask_inputs(inputs, window.mask_rate, *stream_seed, inst.k, vocab_size);
  } else {
    if (coupling == Coupling::kIsolated) fail("stored mask plans describe the pair layout; isolated coupling needs a seed");
    if (inst.mask_plan.size() != inputs.size())
      fail("instance carries ", inst.mask_plan.size(), " mask plans for ", inputs.size(), " inputs");
    plans = inst.mask_plan;
    for (std::size_t i = 0; i < inputs.size(); ++i) apply_plan(inputs[i].ids, plans[i]);
  }
  PreparedInstance p;
  p.true_index = inst.true_index;
  p.k = inst.k;
  if (coupling == Coupling::kIsolated) {
    p.mlm_candidate = -1;
    p.mlm_plan = plans[0];
  } else {
    p.mlm_candidate = inst.true_index;
    p.mlm_plan = plans[static_cast<std::size_t>(inst.true_index) + 1];
  }
  if (coupling != Coupling::kUni) p.anchor = std::move(inputs[0]);
  p.candidates.assign(std::make_move_iterator(inputs.begin() + 1), std::make_move_iterator(inputs.end()));
  return p;
}

inline PreparedPair prepare_pair(const PairInstance& pair, const WindowConfig& window, ObjectiveMode mode,
                                 std::size_t vocab_size, std::optional<std::uint64_t> seed) {
  if (mode == ObjectiveMode::kConpono) fail("prepare_pair: conpono is not a pair objective");
  PreparedPair p;
  p.mode = mode;
  p.label = pair.label;
  p.input = pack_pair(pair.first_ids, pair.second_ids, window.max_seq);
  if (seed) {
    p.plan = apply_masking(p.input.ids, window.mask_rate, *seed, vocab_size);
  } else {
    p.plan = pair.mask_plan;
    apply_plan(p.input.ids, p.plan);
  }
  return p;
}

/// Loss components of one example or the mean over a batch. Components that
/// do not apply to the objective are absent.
struct LossBreakdown {
  std::optional<double> conpono;
  std::optional<double> mlm;
  std::optional<double> baseline;
  double total = 0.0;
};

template <class T>
struct ConponoForward {
  nn::Var<T> logits;  // [1 x C]
  std::optional<Encoded<T>> mlm_pass;
};

/// Candidate logits under the instance's distance head.
template <class T>
ConponoForward<T> conpono_logits(ForwardContext<T>& ctx, const PreparedInstance& p) {
  const Coupling coupling = ctx.params().config().coupling;
  if ((coupling == Coupling::kUni) != !p.anchor.has_value())
    fail("prepared instance does not match coupling ", coupling_name(coupling));
  ConponoForward<T> out;
  std::optional<nn::Var<T>> c;
  if (p.anchor) {
    Encoded<T> e = encode(ctx, *p.anchor);
    c = e.pooled;
    if (p.mlm_candidate < 0) out.mlm_pass = e;
  }
  std::vector<nn::Var<T>> scores;
  scores.reserve(p.candidates.size());
  for (std::size_t j = 0; j < p.candidates.size(); ++j) {
    Encoded<T> e = encode(ctx, p.candidates[j]);
    if (static_cast<int>(j) == p.mlm_candidate) out.mlm_pass = e;
    scores.push_back(score(ctx, c, e.pooled, p.k));
  }
  out.logits = nn::concat(scores, 1);
  return out;
}

/// Mean cross-entropy of the originals at the planned positions; nullopt for
/// an empty plan.
template <class T>
std::optional<nn::Var<T>> mlm_loss(ForwardContext<T>& ctx, nn::Var<T> hidden, const MaskPlan& plan) {
  if (plan.empty()) return std::nullopt;
  std::vector<TokenId> positions, targets;
  for (const MaskEntry& e : plan) {
    if (static_cast<std::size_t>(e.position) >= hidden.value().rows()) continue;
    positions.push_back(e.position);
    targets.push_back(e.original);
  }
  if (positions.empty()) return std::nullopt;
  nn::Var<T> logits = mlm_logits(ctx, hidden, std::span<const TokenId>(positions));
  return nn::cross_entropy(logits, std::span<const TokenId>(targets));
}

template <class T>
struct ExampleLoss {
  nn::Var<T> total;
  std::optional<nn::Var<T>> conpono;
  std::optional<nn::Var<T>> mlm;
  std::optional<nn::Var<T>> baseline;
};

/// conpono (or baseline) + mlm_weight * mlm for one example.
template <class T>
ExampleLoss<T> example_loss(ForwardContext<T>& ctx, const Example& ex, double mlm_weight) {
  ExampleLoss<T> out;
  std::optional<nn::Var<T>> hidden;
  const MaskPlan* plan = nullptr;
  if (const auto* inst = std::get_if<PreparedInstance>(&ex)) {
    ConponoForward<T> f = conpono_logits(ctx, *inst);
    const TokenId target = inst->true_index;
    out.conpono = nn::cross_entropy(f.logits, std::span<const TokenId>(&target, 1));
    out.total = *out.conpono;
    if (f.mlm_pass) hidden = f.mlm_pass->hidden;
    plan = &inst->mlm_plan;
  } else {
    const auto& pair = std::get<PreparedPair>(ex);
    Encoded<T> e = encode(ctx, pair.input);
    const TokenId target = pair.label;
    out.baseline = nn::cross_entropy(pair_logits(ctx, e.pooled), std::span<const TokenId>(&target, 1));
    out.total = *out.baseline;
    hidden = e.hidden;
    plan = &pair.plan;
  }
  if (mlm_weight != 0.0 && hidden) {
    out.mlm = mlm_loss(ctx, *hidden, *plan);
    if (out.mlm) out.total = nn::add(out.total, nn::scale(*out.mlm, static_cast<T>(mlm_weight)));
  }
  return out;
}

inline ObjectiveMode example_mode(const Example& ex) {
  if (std::holds_alternative<PreparedInstance>(ex)) return ObjectiveMode::kConpono;
  return std::get<PreparedPair>(ex).mode;
}

inline ObjectiveMode batch_mode(const std::vector<Example>& batch) {
  if (batch.empty()) fail("empty batch");
  const ObjectiveMode mode = example_mode(batch.front());
  for (const Example& ex : batch)
    if (example_mode(ex) != mode)
      fail("mixed objective modes in one batch: ", objective_name(mode), " and ", objective_name(example_mode(ex)));
  return mode;
}

namespace detail {
struct ComponentSums {
  double conpono = 0, mlm = 0, baseline = 0, total = 0;
  bool has_conpono = false, has_baseline = false, has_mlm = false;

  template <class T>
  void add(const ExampleLoss<T>& l) {
    total += static_cast<double>(l.total.value().item());
    if (l.conpono) {
      has_conpono = true;
      conpono += static_cast<double>(l.conpono->value().item());
    }
    if (l.baseline) {
      has_baseline = true;
      baseline += static_cast<double>(l.baseline->value().item());
    }
    if (l.mlm) mlm += static_cast<double>(l.mlm->value().item());
  }

  LossBreakdown mean(std::size_t n, double mlm_weight) const {
    const double d = static_cast<double>(n);
    LossBreakdown b;
    b.total = total / d;
    if (has_conpono) b.conpono = conpono / d;
    if (has_baseline) b.baseline = baseline / d;
    if (mlm_weight != 0.0) b.mlm = mlm / d;
    return b;
  }
};
}  // namespace detail

/// Mean loss of a batch built on a single tape; the returned Var is
/// differentiable with respect to ctx's parameters.
template <class T>
nn::Var<T> batch_loss(ForwardContext<T>& ctx, const std::vector<Example>& batch, double mlm_weight,
                      LossBreakdown* breakdown = nullptr) {
  batch_mode(batch);
  std::vector<nn::Var<T>> totals;
  detail::ComponentSums sums;
  for (const Example& ex : batch) {
    ExampleLoss<T> l = example_loss(ctx, ex, mlm_weight);
    sums.add(l);
    totals.push_back(nn::reshape(l.total, {1}));
  }
  nn::Var<T> mean = nn::scale(nn::sum(nn::concat(totals, 0)), T(1) / static_cast<T>(batch.size()));
  if (breakdown) {
    *breakdown = sums.mean(batch.size(), mlm_weight);
    breakdown->total = static_cast<double>(mean.value().item());
  }
  return mean;
}

/// Loss values without gradients.
template <class T>
LossBreakdown total_loss(const std::vector<Example>& batch, const EncoderParams<T>& params, double mlm_weight) {
  batch_mode(batch);
  detail::ComponentSums sums;
  for (const Example& ex : batch) {
    nn::Tape<T> tape;
    ForwardContext<T> ctx(tape, params, false, 0, false);
    sums.add(example_loss(ctx, ex, mlm_weight));
  }
  return sums.mean(batch.size(), mlm_weight);
}

/// Mean batch loss and its gradient, one tape per example; per-example
/// gradients are summed in batch order. `grads` must be shaped like the
/// parameters and is overwritten.
template <class T>
LossBreakdown batch_gradient(const std::vector<Example>& batch, const EncoderParams<T>& params, double mlm_weight,
                             nn::ParamSet<T>& grads, bool train, std::uint64_t dropout_seed) {
  batch_mode(batch);
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i].fill(T(0));
  detail::ComponentSums sums;
  const T weight = T(1) / static_cast<T>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    nn::Tape<T> tape;
    ForwardContext<T> ctx(tape, params, train, hash_seed({dropout_seed, b}));
    ExampleLoss<T> l = example_loss(ctx, batch[b], mlm_weight);
    sums.add(l);
    tape.backward(l.total);
    grads.accumulate_grads(tape, ctx.vars(), weight);
  }
  return sums.mean(batch.size(), mlm_weight);
}

/// Logits over an instance's candidates with frozen parameters.
template <class T>
std::vector<T> candidate_logits(const EncoderParams<T>& params, const PreparedInstance& p) {
  nn::Tape<T> tape;
  ForwardContext<T> ctx(tape, params, false, 0, false);
  const nn::Tensor<T>& v = conpono_logits(ctx, p).logits.value();
  return {v.values().begin(), v.values().end()};
}

/// Index of the largest logit; ties go to the lowest index.
template <class T>
int argmax_lowest(const std::vector<T>& logits) {
  if (logits.empty()) fail("argmax of an empty logit vector");
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace conpono
