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

// Frozen-encoder probes over held-out paragraphs:
//
//   SP   five consecutive sentences, one moved to the front; predict where
//        it came from (0..4).
//   BSO  two consecutive sentences, reversed half the time.
//   DC   six consecutive sentences, one interior sentence replaced by a
//        sentence from another document half the time.
//
// Features use only pooled encoder outputs; distance heads are ignored.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "conpono/encoder.hpp"

namespace conpono {

enum class ProbeTask { kSp, kBso, kDc };

inline std::string probe_task_name(ProbeTask t) {
  switch (t) {
    case ProbeTask::kSp: return "sp";
    case ProbeTask::kBso: return "bso";
    case ProbeTask::kDc: return "dc";
  }
  return "?";
}

inline ProbeTask probe_task_from_name(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "sp") return ProbeTask::kSp;
  if (s == "bso") return ProbeTask::kBso;
  if (s == "dc") return ProbeTask::kDc;
  fail("unknown probe task \"", s, "\" (expected sp, bso or dc)");
}

inline std::size_t probe_sentence_count(ProbeTask t) {
  switch (t) {
    case ProbeTask::kSp: return 5;
    case ProbeTask::kBso: return 2;
    case ProbeTask::kDc: return 6;
  }
  return 0;
}

inline int probe_num_classes(ProbeTask t) { return t == ProbeTask::kSp ? 5 : 2; }

struct ProbeExample {
  ProbeTask task = ProbeTask::kBso;
  std::int64_t id = 0;
  std::vector<Sentence> sentences;
  int label = 0;
  bool train = true;
};

inline nlohmann::json probe_example_to_json(const ProbeExample& e) {
  return {{"task", probe_task_name(e.task)},
          {"id", e.id},
          {"sentences", e.sentences},
          {"label", e.label},
          {"split", e.train ? "train" : "test"}};
}

inline ProbeExample probe_example_from_json(const nlohmann::json& j) {
  ProbeExample e;
  try {
    e.task = probe_task_from_name(j.at("task").get<std::string>());
    e.id = j.at("id").get<std::int64_t>();
    e.sentences = j.at("sentences").get<std::vector<Sentence>>();
    e.label = j.at("label").get<int>();
    const auto split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") fail("probe example split must be train or test, got ", split);
    e.train = split == "train";
  } catch (const nlohmann::json::exception& ex) {
    fail("malformed probe example: ", ex.what());
  }
  if (e.sentences.size() != probe_sentence_count(e.task))
    fail("probe example ", e.id, ": ", probe_task_name(e.task), " needs ", probe_sentence_count(e.task),
         " sentences, got ", e.sentences.size());
  return e;
}

inline std::string probes_to_jsonl(const std::vector<ProbeExample>& xs) {
  std::string out;
  for (const auto& e : xs) out += probe_example_to_json(e).dump() + "\n";
  return out;
}

inline std::vector<ProbeExample> probes_from_jsonl(std::string_view text) {
  std::vector<ProbeExample> xs;
  detail::for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t) { xs.push_back(probe_example_from_json(j)); });
  return xs;
}

/// Probe datasets built from every stride-1 window of every paragraph.
/// Paragraphs are split 80/20 into train/test after a seeded shuffle.
inline std::map<ProbeTask, std::vector<ProbeExample>> build_probes(const Corpus& corpus, std::uint64_t seed,
                                                                   const std::vector<ProbeTask>& tasks) {
  struct ParaRef {
    std::size_t doc;
    std::size_t para;
  };
  std::vector<ParaRef> paras;
  for (std::size_t d = 0; d < corpus.size(); ++d)
    for (std::size_t p = 0; p < corpus[d].paragraphs.size(); ++p) paras.push_back({d, p});
  std::mt19937_64 split_rng(hash_seed({seed, 0x5b1dULL}));
  std::shuffle(paras.begin(), paras.end(), split_rng);
  const std::size_t n_train = (paras.size() * 4 + 4) / 5;

  // Random replacement sentences for DC.
  std::vector<std::pair<std::size_t, const Sentence*>> all_sentences;
  for (std::size_t d = 0; d < corpus.size(); ++d)
    for (const auto& para : corpus[d].paragraphs)
      for (const auto& s : para) all_sentences.emplace_back(d, &s);

  std::map<ProbeTask, std::vector<ProbeExample>> out;
  for (ProbeTask task : tasks) {
    auto& xs = out[task];
    const std::size_t width = probe_sentence_count(task);
    for (std::size_t rank = 0; rank < paras.size(); ++rank) {
      const auto [d, p] = paras[rank];
      const Paragraph& para = corpus[d].paragraphs[p];
      for (std::size_t start = 0; start + width <= para.size(); ++start) {
        std::mt19937_64 rng(hash_seed({seed, static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(corpus[d].doc_id),
                                       p, start}));
        ProbeExample e;
        e.task = task;
        e.id = static_cast<std::int64_t>(xs.size());
        e.train = rank < n_train;
        e.sentences.assign(para.begin() + static_cast<std::ptrdiff_t>(start),
                           para.begin() + static_cast<std::ptrdiff_t>(start + width));
        if (task == ProbeTask::kSp) {
          const int pos = std::uniform_int_distribution<int>(0, 4)(rng);
          std::rotate(e.sentences.begin(), e.sentences.begin() + pos, e.sentences.begin() + pos + 1);
          e.label = pos;
        } else if (task == ProbeTask::kBso) {
          e.label = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
          if (e.label) std::swap(e.sentences[0], e.sentences[1]);
        } else {
          e.label = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
          if (e.label) {
            const std::size_t slot = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
            if (all_sentences.empty()) fail("DC probe needs sentences from other documents");
            std::uniform_int_distribution<std::size_t> pick(0, all_sentences.size() - 1);
            bool placed = false;
            for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
              const auto& cand = all_sentences[pick(rng)];
              if (cand.first == d) continue;
              e.sentences[slot] = *cand.second;
              placed = true;
            }
            if (!placed) fail("DC probe needs at least two documents");
          }
        }
        xs.push_back(std::move(e));
      }
    }
    std::size_t tr = 0, te = 0;
    for (const auto& e : xs) (e.train ? tr : te)++;
    if (tr == 0 || te == 0)
      fail(probe_task_name(task), " probe needs paragraphs with >= ", width, " sentences in both splits; got ", tr,
           " train and ", te, " test examples from ", paras.size(), " paragraphs");
  }
  return out;
}

/// Pooled-vector features with frozen parameters and no masking.
template <class T>
std::vector<double> featurize(const EncoderParams<T>& params, const ProbeExample& e) {
  const int max_seq = params.config().max_positions;
  std::vector<nn::Tensor<T>> parts;
  const auto& s = e.sentences;
  switch (e.task) {
    case ProbeTask::kSp:
      parts.push_back(pooled_vector(params, pack_single(s[0], max_seq)));
      for (std::size_t j = 1; j < 5; ++j) parts.push_back(pooled_vector(params, pack_pair(s[0], s[j], max_seq)));
      break;
    case ProbeTask::kBso:
      parts.push_back(pooled_vector(params, pack_pair(s[0], s[1], max_seq)));
      break;
    case ProbeTask::kDc:
      for (std::size_t j = 0; j < 6; j += 2) parts.push_back(pooled_vector(params, pack_pair(s[j], s[j + 1], max_seq)));
      break;
  }
  std::vector<double> f;
  for (const auto& t : parts)
    for (T v : t.values()) f.push_back(static_cast<double>(v));
  return f;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct ProbeTrainConfig {
  int epochs = 500;
  double lr = 0.1;
  double l2 = 1e-4;
};

/// Multinomial logistic regression on standardized features.
class LogisticProbe {
 public:
  void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes,
           const ProbeTrainConfig& cfg = {}) {
    if (x.empty() || x.size() != y.size()) fail("probe: features and labels must be non-empty and aligned");
    std::vector<int> seen(static_cast<std::size_t>(classes), 0);
    for (int label : y) {
      if (label < 0 || label >= classes) fail("probe: label ", label, " outside [0,", classes, ")");
      seen[static_cast<std::size_t>(label)] = 1;
    }
    if (std::accumulate(seen.begin(), seen.end(), 0) < 2) fail("probe: training labels contain a single class");
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto d = static_cast<Eigen::Index>(x.front().size());
    Eigen::MatrixXd X = to_matrix(x);
    mean_ = X.colwise().mean();
    std_ = ((X.rowwise() - mean_).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index j = 0; j < d; ++j)
      if (std_(j) < 1e-12) std_(j) = 1.0;
    X = standardize(X);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) Y(i, y[static_cast<std::size_t>(i)]) = 1.0;
    w_ = Eigen::MatrixXd::Zero(d, classes);
    b_ = Eigen::RowVectorXd::Zero(classes);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Eigen::MatrixXd G = softmax_rows((X * w_).rowwise() + b_) - Y;
      G /= static_cast<double>(n);
      w_ -= cfg.lr * (X.transpose() * G + cfg.l2 * w_);
      b_ -= cfg.lr * G.colwise().sum();
    }
  }

  std::vector<int> predict(const std::vector<std::vector<double>>& x) const {
    const Eigen::MatrixXd P = (standardize(to_matrix(x)) * w_).rowwise() + b_;
    std::vector<int> out(x.size());
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < P.cols(); ++c)
        if (P(i, c) > P(i, best)) best = c;
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }

 private:
  static Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& x) {
    const std::size_t d = x.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].size() != d) fail("probe: feature width ", x[i].size(), " differs from ", d);
      for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[i][j];
    }
    return m;
  }
  Eigen::MatrixXd standardize(const Eigen::MatrixXd& X) const {
    if (X.cols() != mean_.cols()) fail("probe: feature width ", X.cols(), " differs from trained width ", mean_.cols());
    return (X.rowwise() - mean_).array().rowwise() / std_.array();
  }
  static Eigen::MatrixXd softmax_rows(Eigen::MatrixXd z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      z.row(i).array() -= z.row(i).maxCoeff();
      z.row(i) = z.row(i).array().exp().matrix();
      z.row(i) /= z.row(i).sum();
    }
    return z;
  }

  Eigen::RowVectorXd mean_, std_, b_;
  Eigen::MatrixXd w_;
};

struct ProbeResult {
  ProbeTask task = ProbeTask::kBso;
  double accuracy = 0.0;
  double baseline = 0.0;  // test accuracy of the train-split majority class
  std::size_t train_examples = 0;
  std::size_t test_examples = 0;
  std::vector<std::pair<std::int64_t, int>> predictions;  // test ids

  nlohmann::json to_json() const {
    return {{"accuracy", accuracy}, {"baseline", baseline}, {"train_examples", train_examples},
            {"test_examples", test_examples}};
  }
};

/// Trains a probe on the train split and scores the test split. Features
/// are given in example order.
inline ProbeResult train_probe(const std::vector<ProbeExample>& examples, const std::vector<std::vector<double>>& features,
                               const ProbeTrainConfig& cfg = {}) {
  if (examples.empty()) fail("probe: no examples");
  if (examples.size() != features.size()) fail("probe: ", examples.size(), " examples but ", features.size(), " feature rows");
  const ProbeTask task = examples.front().task;
  const int classes = probe_num_classes(task);
  std::vector<std::vector<double>> xtr, xte;
  std::vector<int> ytr, yte;
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].task != task) fail("probe: mixed tasks in one dataset");
    if (examples[i].train) {
      xtr.push_back(features[i]);
      ytr.push_back(examples[i].label);
    } else {
      xte.push_back(features[i]);
      yte.push_back(examples[i].label);
      ids.push_back(examples[i].id);
    }
  }
  if (xte.empty()) fail("probe: empty test split");
  LogisticProbe model;
  model.fit(xtr, ytr, classes, cfg);
  const auto pred = model.predict(xte);

  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (int label : ytr) ++counts[static_cast<std::size_t>(label)];
  const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  ProbeResult r;
  r.task = task;
  r.train_examples = xtr.size();
  r.test_examples = xte.size();
  std::size_t correct = 0, base = 0;
  for (std::size_t i = 0; i < yte.size(); ++i) {
    correct += pred[i] == yte[i];
    base += majority == yte[i];
    r.predictions.emplace_back(ids[i], pred[i]);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(yte.size());
  r.baseline = static_cast<double>(base) / static_cast<double>(yte.size());
  return r;
}

template <class T>
ProbeResult run_probe(const EncoderParams<T>& params, const std::vector<ProbeExample>& examples,
                      const ProbeTrainConfig& cfg = {}) {
  std::vector<std::vector<double>> feats;
  feats.reserve(examples.size());
  for (const auto& e : examples) feats.push_back(featurize(params, e));
  return train_probe(examples, feats, cfg);
}

struct ProbeReport {
  std::string checkpoint;
  std::vector<ProbeResult> results;

  nlohmann::json to_json() const {
    nlohmann::json tasks = nlohmann::json::object();
    for (const auto& r : results) tasks[probe_task_name(r.task)] = r.to_json();
    return {{"checkpoint", checkpoint}, {"tasks", tasks}};
  }
};

inline std::string predictions_to_jsonl(const std::vector<std::pair<std::int64_t, int>>& preds) {
  std::string out;
  for (auto [id, p] : preds) out += nlohmann::json{{"id", id}, {"pred", p}}.dump() + "\n";
  return out;
}

}  // namespace conpono
