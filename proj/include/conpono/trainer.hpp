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
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "conpono/checkpoint.hpp"
#include "conpono/nn/adam.hpp"
#include "conpono/objective.hpp"

namespace conpono {

struct TrainConfig {
  ObjectiveMode objective = ObjectiveMode::kConpono;
  EncoderConfig encoder;  // vocab_size and K are filled from the shards
  WindowConfig window;
  int batch_size = 8;
  std::int64_t total_steps = 100;
  double base_lr = 1e-3;
  double warmup_fraction = 0.25;
  double mlm_weight = 1.0;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_interval = 0;  // 0: only the final checkpoint
  double heldout_fraction = 0.02;
  std::int64_t eval_max = 0;  // cap on held-out instances per evaluation; 0 = all

  void validate() const {
    if (batch_size < 1) fail("train: batch_size must be >= 1, got ", batch_size);
    if (total_steps < 1) fail("train: total_steps must be >= 1, got ", total_steps);
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
      fail("train: warmup_fraction must lie in [0,1), got ", warmup_fraction);
    if (heldout_fraction < 0.0 || heldout_fraction >= 1.0)
      fail("train: heldout_fraction must lie in [0,1), got ", heldout_fraction);
    if (mlm_weight < 0.0) fail("train: mlm_weight must be >= 0");
    window.validate();
  }
};

/// Flat JSON form. Every key is optional; unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail("train config must be a JSON object");
  TrainConfig c;
  static const std::set<std::string> known = {
      "objective",  "coupling",       "layers",    "hidden",     "heads",           "intermediate",
      "max_positions", "dropout",     "init_std",  "K",          "anchor_len",      "target_len",
      "ks_per_paragraph", "num_hard", "num_random", "mask_rate", "max_seq",         "batch_size",
      "total_steps", "lr",            "warmup_fraction", "mlm_weight", "seed",      "checkpoint_interval",
      "heldout_fraction", "eval_max"};
  for (auto& [k, v] : j.items())
    if (!known.contains(k)) fail("unknown train config key \"", k, "\"");
  try {
    auto get = [&](const char* key, auto& dst) {
      if (j.contains(key)) j.at(key).get_to(dst);
    };
    if (j.contains("objective")) c.objective = objective_from_name(j.at("objective").get<std::string>());
    if (j.contains("coupling")) c.encoder.coupling = coupling_from_name(j.at("coupling").get<std::string>());
    get("layers", c.encoder.layers);
    get("hidden", c.encoder.hidden);
    get("heads", c.encoder.heads);
    get("intermediate", c.encoder.intermediate);
    get("max_positions", c.encoder.max_positions);
    get("dropout", c.encoder.dropout);
    get("init_std", c.encoder.init_std);
    get("K", c.window.K);
    get("anchor_len", c.window.anchor_len);
    get("target_len", c.window.target_len);
    get("ks_per_paragraph", c.window.ks_per_paragraph);
    get("num_hard", c.window.num_hard);
    get("num_random", c.window.num_random);
    get("mask_rate", c.window.mask_rate);
    get("max_seq", c.window.max_seq);
    get("batch_size", c.batch_size);
    get("total_steps", c.total_steps);
    get("lr", c.base_lr);
    get("warmup_fraction", c.warmup_fraction);
    get("mlm_weight", c.mlm_weight);
    get("seed", c.seed);
    get("checkpoint_interval", c.checkpoint_interval);
    get("heldout_fraction", c.heldout_fraction);
    get("eval_max", c.eval_max);
  } catch (const nlohmann::json::exception& e) {
    fail("train config: ", e.what());
  }
  c.encoder.K = c.window.K;
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"objective", objective_name(c.objective)},
          {"coupling", coupling_name(c.encoder.coupling)},
          {"layers", c.encoder.layers},
          {"hidden", c.encoder.hidden},
          {"heads", c.encoder.heads},
          {"intermediate", c.encoder.intermediate},
          {"max_positions", c.encoder.max_positions},
          {"dropout", c.encoder.dropout},
          {"init_std", c.encoder.init_std},
          {"K", c.window.K},
          {"anchor_len", c.window.anchor_len},
          {"target_len", c.window.target_len},
          {"ks_per_paragraph", c.window.ks_per_paragraph},
          {"num_hard", c.window.num_hard},
          {"num_random", c.window.num_random},
          {"mask_rate", c.window.mask_rate},
          {"max_seq", c.window.max_seq},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"lr", c.base_lr},
          {"warmup_fraction", c.warmup_fraction},
          {"mlm_weight", c.mlm_weight},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"heldout_fraction", c.heldout_fraction},
          {"eval_max", c.eval_max}};
}

/// Instances produced by the sampler together with the settings that
/// produced them.
struct ShardSet {
  WindowConfig window;
  std::uint64_t sampler_seed = 0;
  std::size_t vocab_size = 0;
  std::vector<TrainingInstance> instances;
  std::vector<PairInstance> nsp;
  std::vector<PairInstance> bso;
};

/// Document-level held-out membership; instances never decide it.
inline bool is_heldout_doc(std::int64_t doc_id, std::uint64_t seed, double fraction) {
  const std::uint64_t h = hash_seed({seed, static_cast<std::uint64_t>(doc_id), 0x4e1dULL});
  return static_cast<double>(h >> 11) * 0x1.0p-53 < fraction;
}

// ---------------------------------------------------------------------------
// Held-out evaluation

struct HeldoutReport {
  struct Bucket {
    std::int64_t correct = 0;
    std::int64_t total = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  };
  std::map<int, Bucket> per_k;  // k = 0 collects pair-objective examples
  Bucket overall;
  double chance = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json pk = nlohmann::json::object();
    for (const auto& [k, b] : per_k) pk[std::to_string(k)] = {{"accuracy", b.accuracy()}, {"count", b.total}};
    return {{"per_k", pk}, {"overall", overall.accuracy()}, {"examples", overall.total}, {"chance", chance}};
  }
};

/// Argmax accuracy of the true target per distance label. Stored mask plans
/// are replayed; isolated coupling re-derives its epoch-0 masks from the
/// sampler seed.
template <class T>
HeldoutReport evaluate_heldout(const EncoderParams<T>& params, const std::vector<TrainingInstance>& heldout,
                               const WindowConfig& window, std::uint64_t sampler_seed) {
  if (heldout.empty()) fail("held-out evaluation set is empty");
  const Coupling coupling = params.config().coupling;
  const auto V = static_cast<std::size_t>(params.config().vocab_size);
  HeldoutReport r;
  r.chance = 1.0 / static_cast<double>(heldout.front().candidates.size());
  for (const TrainingInstance& inst : heldout) {
    std::optional<std::uint64_t> seed;
    if (coupling == Coupling::kIsolated)
      seed = epoch_stream_seed(sampler_seed, inst.anchor.doc_id, inst.anchor.paragraph, 0);
    const PreparedInstance p = prepare_instance(inst, window, coupling, V, seed);
    const bool ok = argmax_lowest(candidate_logits(params, p)) == inst.true_index;
    auto& b = r.per_k[inst.k];
    ++b.total;
    ++r.overall.total;
    if (ok) {
      ++b.correct;
      ++r.overall.correct;
    }
  }
  return r;
}

/// Accuracy of the 2-way pair classifier.
template <class T>
HeldoutReport evaluate_pairs(const EncoderParams<T>& params, const std::vector<PairInstance>& heldout,
                             const WindowConfig& window, ObjectiveMode mode) {
  if (heldout.empty()) fail("held-out evaluation set is empty");
  HeldoutReport r;
  r.chance = 0.5;
  for (const PairInstance& pair : heldout) {
    const PreparedPair p = prepare_pair(pair, window, mode, static_cast<std::size_t>(params.config().vocab_size), std::nullopt);
    nn::Tape<T> tape;
    ForwardContext<T> ctx(tape, params, false, 0, false);
    const auto& logits = pair_logits(ctx, encode(ctx, p.input).pooled).value();
    const int pred = logits[1] > logits[0] ? 1 : 0;
    auto& b = r.per_k[0];
    ++b.total;
    ++r.overall.total;
    if (pred == pair.label) {
      ++b.correct;
      ++r.overall.correct;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct StepRecord {
  std::int64_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct RunLog {
  ObjectiveMode objective = ObjectiveMode::kConpono;
  std::vector<StepRecord> steps;
  std::vector<std::pair<std::int64_t, HeldoutReport>> checkpoints;

  /// One JSON object per step. Wall time is kept out so identical runs
  /// serialize identically.
  std::string to_jsonl() const {
    std::string out;
    for (const StepRecord& s : steps) {
      nlohmann::json j = {{"step", s.step}, {"loss_total", s.loss.total}, {"lr", s.lr}};
      if (s.loss.conpono) j["loss_conpono"] = *s.loss.conpono;
      j["loss_mlm"] = s.loss.mlm.value_or(0.0);
      if (s.loss.baseline) j[std::string("loss_") + objective_name(objective)] = *s.loss.baseline;
      out += j.dump() + "\n";
    }
    return out;
  }
};

struct TrainResult {
  EncoderParams<float> params;
  RunLog log;
  std::vector<std::int64_t> heldout_docs;
  std::vector<TrainingInstance> heldout_instances;
  std::vector<PairInstance> heldout_pairs;
  std::optional<HeldoutReport> final_eval;
};

struct TrainHooks {
  /// Called at every checkpoint (including the final step).
  std::function<void(std::int64_t step, const EncoderParams<float>&, const RunLog&)> on_checkpoint;
  /// Called after every step.
  std::function<void(const StepRecord&)> on_step;
};

/// Encoder config implied by a train config and its shards.
inline EncoderConfig resolved_encoder_config(const TrainConfig& cfg, const ShardSet& shards) {
  EncoderConfig e = cfg.encoder;
  e.vocab_size = static_cast<int>(shards.vocab_size);
  e.K = cfg.window.K;
  return e;
}

inline void check_shards(const TrainConfig& cfg, const ShardSet& shards) {
  cfg.validate();
  if (cfg.window.K != shards.window.K)
    fail("K mismatch: train config K=", cfg.window.K, " but shards were built with K=", shards.window.K);
  if (cfg.window.num_candidates() != shards.window.num_candidates())
    fail("candidate count mismatch: train config ", cfg.window.num_candidates(), " vs shards ",
         shards.window.num_candidates());
  if (cfg.window.max_seq != shards.window.max_seq)
    fail("max_seq mismatch: train config ", cfg.window.max_seq, " vs shards ", shards.window.max_seq);
  if (cfg.encoder.max_positions < cfg.window.max_seq)
    fail("max_positions ", cfg.encoder.max_positions, " is below max_seq ", cfg.window.max_seq);
  if (shards.vocab_size <= static_cast<std::size_t>(kNumSpecials)) fail("shards carry no vocabulary size");
}

/// Deterministic training: batch composition, masking, dropout and
/// initialization all derive from the config seed and the sampler seed.
inline TrainResult train(const TrainConfig& cfg, const ShardSet& shards, const TrainHooks& hooks = {}) {
  check_shards(cfg, shards);
  const EncoderConfig ecfg = resolved_encoder_config(cfg, shards);
  TrainResult result;
  result.params = EncoderParams<float>::init(ecfg, cfg.seed);
  result.log.objective = cfg.objective;

  // Split by document.
  std::set<std::int64_t> heldout_docs;
  std::vector<const TrainingInstance*> train_insts;
  std::vector<const PairInstance*> train_pairs;
  const bool pairs_mode = cfg.objective != ObjectiveMode::kConpono;
  auto heldout = [&](std::int64_t doc) {
    const bool h = is_heldout_doc(doc, cfg.seed, cfg.heldout_fraction);
    if (h) heldout_docs.insert(doc);
    return h;
  };
  if (!pairs_mode) {
    for (const auto& inst : shards.instances) {
      if (heldout(inst.anchor.doc_id))
        result.heldout_instances.push_back(inst);
      else
        train_insts.push_back(&inst);
    }
  } else {
    const auto& src = cfg.objective == ObjectiveMode::kNsp ? shards.nsp : shards.bso;
    for (const auto& p : src) {
      if (heldout(p.first.doc_id))
        result.heldout_pairs.push_back(p);
      else
        train_pairs.push_back(&p);
    }
  }
  result.heldout_docs.assign(heldout_docs.begin(), heldout_docs.end());
  const std::size_t n_train = pairs_mode ? train_pairs.size() : train_insts.size();
  if (n_train == 0) fail("no training examples after the held-out split");

  nn::AdamConfig acfg;
  acfg.base_lr = cfg.base_lr;
  acfg.warmup_fraction = cfg.warmup_fraction;
  acfg.total_steps = cfg.total_steps;
  nn::OptimizerState<float> opt(acfg, result.params.params());
  nn::ParamSet<float> grads = result.params.params().zeros_like();

  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order(n_train);
  auto epoch_order = [&](std::int64_t epoch) -> const std::vector<std::size_t>& {
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(hash_seed({cfg.seed, static_cast<std::uint64_t>(epoch), 0x0bd3ULL}));
      std::shuffle(order.begin(), order.end(), rng);
      cached_epoch = epoch;
    }
    return order;
  };

  auto make_example = [&](std::size_t idx, std::int64_t epoch) -> Example {
    const auto V = shards.vocab_size;
    if (!pairs_mode) {
      const TrainingInstance& inst = *train_insts[idx];
      std::optional<std::uint64_t> seed;
      if (epoch > 0 || ecfg.coupling == Coupling::kIsolated)
        seed = epoch_stream_seed(shards.sampler_seed, inst.anchor.doc_id, inst.anchor.paragraph, epoch);
      return prepare_instance(inst, cfg.window, ecfg.coupling, V, seed);
    }
    const PairInstance& pair = *train_pairs[idx];
    std::optional<std::uint64_t> seed;
    if (epoch > 0)
      seed = hash_seed({epoch_stream_seed(shards.sampler_seed, pair.first.doc_id, pair.first.paragraph, epoch),
                        static_cast<std::uint64_t>(pair.first.start), static_cast<std::uint64_t>(pair.label)});
    return prepare_pair(pair, cfg.window, cfg.objective, V, seed);
  };

  auto evaluate = [&](const EncoderParams<float>& params) -> std::optional<HeldoutReport> {
    const std::size_t cap = cfg.eval_max > 0 ? static_cast<std::size_t>(cfg.eval_max) : SIZE_MAX;
    if (!pairs_mode) {
      if (result.heldout_instances.empty()) return std::nullopt;
      std::vector<TrainingInstance> subset(result.heldout_instances.begin(),
                                           result.heldout_instances.begin() +
                                               static_cast<std::ptrdiff_t>(std::min(cap, result.heldout_instances.size())));
      return evaluate_heldout(params, subset, cfg.window, shards.sampler_seed);
    }
    if (result.heldout_pairs.empty()) return std::nullopt;
    std::vector<PairInstance> subset(result.heldout_pairs.begin(),
                                     result.heldout_pairs.begin() +
                                         static_cast<std::ptrdiff_t>(std::min(cap, result.heldout_pairs.size())));
    return evaluate_pairs(params, subset, cfg.window, cfg.objective);
  };

  const auto t0 = std::chrono::steady_clock::now();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  for (std::int64_t step = 0; step < cfg.total_steps; ++step) {
    std::vector<Example> batch;
    batch.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t g = static_cast<std::size_t>(step) * B + b;
      const auto epoch = static_cast<std::int64_t>(g / n_train);
      batch.push_back(make_example(epoch_order(epoch)[g % n_train], epoch));
    }
    StepRecord rec;
    rec.step = step + 1;
    rec.loss = batch_gradient(batch, result.params, cfg.mlm_weight, grads, true,
                              hash_seed({cfg.seed, static_cast<std::uint64_t>(step), 0xd20bULL}));
    rec.lr = nn::adam_step(result.params.params(), grads, opt);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.steps.push_back(rec);
    if (hooks.on_step) hooks.on_step(rec);

    const bool last = rec.step == cfg.total_steps;
    const bool interval = cfg.checkpoint_interval > 0 && rec.step % cfg.checkpoint_interval == 0;
    if (last || interval) {
      if (auto report = evaluate(result.params)) result.log.checkpoints.emplace_back(rec.step, *report);
      if (hooks.on_checkpoint) hooks.on_checkpoint(rec.step, result.params, result.log);
    }
  }
  if (!result.log.checkpoints.empty() && result.log.checkpoints.back().first == cfg.total_steps)
    result.final_eval = result.log.checkpoints.back().second;
  return result;
}

}  // namespace conpono
