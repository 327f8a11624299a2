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

// Command-line driver for the pipeline:
// ingest -> vocab -> examples -> train -> eval -> probe -> analyze-markers -> report.
//
// Errors go to stderr as one line "error: <message>" with exit code 1; usage
// errors exit with 2.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "conpono/conpono.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace conpono::cli {
namespace {

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) fail(what, " not found: ", path);
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) fail(what, " not found: ", path);
}

json read_json(const std::string& path, const char* what) {
  require_file(path, what);
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(what, " ", path, " is not valid JSON: ", e.what());
  }
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  write_file(path, text);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Manifest beside a file output, or inside a directory output.
void write_manifest(const std::string& out, const RunManifest& m) {
  const std::string path = fs::is_directory(out) ? (fs::path(out) / "manifest.json").string() : out + ".manifest.json";
  write_json(path, m.to_json());
}

/// Corpus files hold either surface tokens or ids; ids need no vocabulary.
Corpus load_corpus(const std::string& path, const std::optional<Vocabulary>& vocab) {
  const std::string text = read_file(path);
  if (!jsonl_corpus_is_text(text)) return corpus_from_jsonl(text);
  if (!vocab) fail("corpus ", path, " holds surface tokens; pass --vocab to encode it");
  return encode_corpus(text_corpus_from_jsonl(text), *vocab);
}

Vocabulary load_vocab(const std::string& path) { return Vocabulary::from_json(read_json(path, "vocabulary")); }

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
  std::vector<std::string> inputs;
  std::string out;
  bool synthetic = false;
  std::size_t docs = 100;
  std::size_t paragraphs = 4;
  std::uint64_t seed = 1;
  std::int64_t first_doc_id = 0;
};

void run_ingest(const IngestArgs& a) {
  if (a.synthetic == !a.inputs.empty()) fail("ingest: pass either --in <paths> or --synthetic");
  for (const auto& p : a.inputs) require_file(p, "input file");
  RunManifest m;
  m.command = "ingest";
  m.seed = a.seed;
  TextCorpus corpus;
  if (a.synthetic) {
    SyntheticConfig sc;
    sc.seed = a.seed;
    sc.num_docs = a.docs;
    sc.paragraphs_per_doc = a.paragraphs;
    sc.first_doc_id = a.first_doc_id;
    corpus = generate_synthetic_corpus(sc);
    m.config = {{"synthetic", true}, {"docs", a.docs}, {"paragraphs", a.paragraphs}, {"first_doc_id", a.first_doc_id}};
  } else {
    std::int64_t next = a.first_doc_id;
    for (const auto& p : a.inputs) {
      auto part = parse_text_corpus(read_file(p), next);
      next += static_cast<std::int64_t>(part.size());
      for (auto& d : part) corpus.push_back(std::move(d));
      m.add_input(p);
    }
    m.config = {{"synthetic", false}, {"first_doc_id", a.first_doc_id}};
    if (corpus.empty()) fail("ingest: inputs contain no paragraphs");
  }
  write_text(a.out, text_corpus_to_jsonl(corpus));
  m.outputs["corpus"] = a.out;
  write_manifest(a.out, m);
}

// ---------------------------------------------------------------------------
// vocab

void run_vocab(const std::string& corpus_path, std::size_t size, const std::string& out) {
  require_file(corpus_path, "corpus");
  const std::string text = read_file(corpus_path);
  if (!jsonl_corpus_is_text(text)) fail("vocab: corpus ", corpus_path, " is already id-encoded");
  const Vocabulary v = build_vocab(text_corpus_from_jsonl(text), size);
  write_json(out, v.to_json());
  RunManifest m;
  m.command = "vocab";
  m.config = {{"size", size}};
  m.add_input(corpus_path);
  m.outputs["vocab"] = out;
  write_manifest(out, m);
}

// ---------------------------------------------------------------------------
// examples

struct ExamplesArgs {
  std::string corpus;
  std::string vocab;
  std::string out;
  WindowConfig window;
  std::uint64_t seed = 1;
};

void run_examples(const ExamplesArgs& a) {
  require_file(a.corpus, "corpus");
  require_file(a.vocab, "vocabulary");
  a.window.validate();
  const Vocabulary vocab = load_vocab(a.vocab);
  const Corpus corpus = load_corpus(a.corpus, vocab);
  ShardSet s;
  s.window = a.window;
  s.sampler_seed = a.seed;
  s.vocab_size = vocab.size();
  s.instances = build_corpus_instances(corpus, a.window, a.seed, vocab.size());
  s.nsp = build_corpus_pairs(corpus, a.window, a.seed, vocab.size(), PairMode::kNsp);
  s.bso = build_corpus_pairs(corpus, a.window, a.seed, vocab.size(), PairMode::kBso);
  if (s.instances.empty()) fail("examples: the corpus yields no training instances for K=", a.window.K);
  save_shards(a.out, s);
  const std::string stats = (fs::path(a.out) / "corpus_stats.json").string();
  write_json(stats, stats_to_json(compute_stats(corpus, vocab)));
  RunManifest m;
  m.command = "examples";
  m.config = a.window;
  m.seed = a.seed;
  m.add_input(a.corpus);
  m.add_input(a.vocab);
  m.outputs = {{"shards", a.out}, {"corpus_stats", stats}};
  write_manifest(a.out, m);
}

// ---------------------------------------------------------------------------
// train

std::string checkpoint_name(std::int64_t step) { return "step_" + std::to_string(step) + ".ckpt"; }

/// One training run into `dir`. The run log and held-out metrics are
/// rewritten at every checkpoint.
json train_one(const TrainConfig& cfg, const ShardSet& shards, const std::string& dir, RunManifest manifest) {
  check_shards(cfg, shards);
  fs::create_directories(fs::path(dir) / "checkpoints");
  const std::string log_path = (fs::path(dir) / "run_log.jsonl").string();
  const std::string eval_path = (fs::path(dir) / "eval.jsonl").string();
  write_json((fs::path(dir) / "config.json").string(), train_config_to_json(cfg));

  TrainHooks hooks;
  hooks.on_checkpoint = [&](std::int64_t step, const EncoderParams<float>& params, const RunLog& log) {
    save_checkpoint((fs::path(dir) / "checkpoints" / checkpoint_name(step)).string(), params, step, cfg.seed);
    write_file(log_path, log.to_jsonl());
    std::string evals;
    for (const auto& [s, r] : log.checkpoints) {
      json j = r.to_json();
      j["step"] = s;
      evals += j.dump() + "\n";
    }
    write_file(eval_path, evals);
  };
  const TrainResult r = train(cfg, shards, hooks);
  const std::string final_ckpt = (fs::path(dir) / "final.ckpt").string();
  save_checkpoint(final_ckpt, r.params, cfg.total_steps, cfg.seed);
  write_json((fs::path(dir) / "heldout_docs.json").string(), r.heldout_docs);

  json summary = {{"steps", cfg.total_steps}, {"final_loss", r.log.steps.back().loss.total}};
  if (r.final_eval) summary["heldout"] = r.final_eval->to_json();
  manifest.config = train_config_to_json(cfg);
  manifest.seed = cfg.seed;
  manifest.outputs = {{"checkpoint", final_ckpt}, {"run_log", log_path}, {"eval", eval_path}};
  write_manifest(dir, manifest);
  return summary;
}

/// Grid file: {"base": {flat train config}, "axes": {"objective": [...],
/// "coupling": [...], "K": [...], "mlm_weight": [...]}}.
struct GridCell {
  std::string name;
  json config;
};

std::vector<GridCell> expand_grid(const json& grid) {
  if (!grid.is_object()) fail("grid file must be a JSON object");
  for (auto& [k, _] : grid.items())
    if (k != "base" && k != "axes") fail("unknown grid key \"", k, "\"");
  const json base = grid.value("base", json::object());
  const json axes = grid.value("axes", json::object());
  static const std::vector<std::string> order = {"objective", "coupling", "K", "mlm_weight"};
  for (auto& [k, v] : axes.items()) {
    if (std::find(order.begin(), order.end(), k) == order.end()) fail("unknown grid axis \"", k, "\"");
    if (!v.is_array() || v.empty()) fail("grid axis \"", k, "\" must be a non-empty array");
  }
  auto values = [&](const std::string& key) {
    if (axes.contains(key)) return axes.at(key);
    return base.contains(key) ? json::array({base.at(key)}) : json::array({train_config_to_json(TrainConfig{})[key]});
  };
  std::vector<GridCell> cells;
  std::set<std::string> seen;
  for (const auto& obj : values("objective"))
    for (const auto& coupling : values("coupling"))
      for (const auto& K : values("K"))
        for (const auto& w : values("mlm_weight")) {
          json c = base;
          c["objective"] = obj;
          c["K"] = K;
          c["mlm_weight"] = w;
          const bool pairs = obj.get<std::string>() != "conpono";
          // Coupling only shapes the distance heads.
          c["coupling"] = pairs ? values("coupling").front() : coupling;
          std::ostringstream name;
          name << obj.get<std::string>();
          if (!pairs) name << "-" << coupling.get<std::string>();
          name << "-K" << K.get<int>() << "-mlm" << w.dump();
          if (!seen.insert(name.str()).second) continue;
          train_config_from_json(c).validate();
          cells.push_back({name.str(), c});
        }
  return cells;
}

/// Shards for a given K: `<dir>/K<k>/` when present, else `<dir>` itself.
std::string shard_dir_for(const std::string& dir, int K) {
  const fs::path sub = fs::path(dir) / ("K" + std::to_string(K));
  return fs::is_directory(sub) ? sub.string() : dir;
}

void add_shard_inputs(RunManifest& m, const std::string& dir) {
  for (const char* f : {kShardMetaFile, kShardInstanceFile, kShardNspFile, kShardBsoFile})
    m.add_input((fs::path(dir) / f).string());
}

void run_train(const std::string& config_path, const std::string& grid_path, const std::string& shards_dir,
               const std::string& out) {
  if (config_path.empty() == grid_path.empty()) fail("train: pass exactly one of --config or --grid");
  require_dir(shards_dir, "shard directory");
  if (!config_path.empty()) {
    const TrainConfig cfg = train_config_from_json(read_json(config_path, "train config"));
    const ShardSet shards = load_shards(shards_dir);
    check_shards(cfg, shards);
    RunManifest m;
    m.command = "train";
    m.add_input(config_path);
    add_shard_inputs(m, shards_dir);
    std::cout << train_one(cfg, shards, out, m).dump() << "\n";
    return;
  }
  const auto cells = expand_grid(read_json(grid_path, "grid file"));
  // Validate every cell against its shards before any training starts.
  std::map<std::string, ShardSet> shard_cache;
  for (const auto& c : cells) {
    const TrainConfig cfg = train_config_from_json(c.config);
    const std::string dir = shard_dir_for(shards_dir, cfg.window.K);
    if (!shard_cache.contains(dir)) shard_cache.emplace(dir, load_shards(dir));
    try {
      check_shards(cfg, shard_cache.at(dir));
    } catch (const Error& e) {
      fail("grid cell ", c.name, ": ", e.what());
    }
  }
  json index = json::array();
  for (const auto& c : cells) {
    const TrainConfig cfg = train_config_from_json(c.config);
    const std::string dir = shard_dir_for(shards_dir, cfg.window.K);
    RunManifest m;
    m.command = "train --grid";
    m.add_input(grid_path);
    add_shard_inputs(m, dir);
    json s = train_one(cfg, shard_cache.at(dir), (fs::path(out) / c.name).string(), m);
    s["cell"] = c.name;
    index.push_back(s);
    std::cout << s.dump() << "\n";
  }
  write_json((fs::path(out) / "grid.json").string(), index);
}

// ---------------------------------------------------------------------------
// eval

void run_eval(const std::string& ckpt, const std::string& heldout, const std::string& run_dir,
              const std::string& objective, std::int64_t max_examples, const std::string& out) {
  require_file(ckpt, "checkpoint");
  require_dir(heldout, "held-out shard directory");
  const ObjectiveMode mode = objective_from_name(objective);
  std::optional<std::set<std::int64_t>> docs;
  if (!run_dir.empty()) {
    const json d = read_json((fs::path(run_dir) / "heldout_docs.json").string(), "held-out document list");
    docs = d.get<std::set<std::int64_t>>();
  }
  CheckpointMeta meta;
  const auto params = load_checkpoint<float>(ckpt, &meta);
  const ShardSet shards = load_shards(heldout);
  if (meta.config.vocab_size != static_cast<int>(shards.vocab_size))
    fail("vocabulary mismatch: checkpoint vocab_size=", meta.config.vocab_size, " but shards vocab_size=",
         shards.vocab_size);
  if (mode == ObjectiveMode::kConpono && meta.config.K != shards.window.K)
    fail("K mismatch: checkpoint K=", meta.config.K, " but shards were built with K=", shards.window.K);
  const auto cap = max_examples > 0 ? static_cast<std::size_t>(max_examples) : SIZE_MAX;
  HeldoutReport r;
  if (mode == ObjectiveMode::kConpono) {
    std::vector<TrainingInstance> xs;
    for (const auto& i : shards.instances)
      if ((!docs || docs->contains(i.anchor.doc_id)) && xs.size() < cap) xs.push_back(i);
    r = evaluate_heldout(params, xs, shards.window, shards.sampler_seed);
  } else {
    std::vector<PairInstance> xs;
    for (const auto& p : mode == ObjectiveMode::kNsp ? shards.nsp : shards.bso)
      if ((!docs || docs->contains(p.first.doc_id)) && xs.size() < cap) xs.push_back(p);
    r = evaluate_pairs(params, xs, shards.window, mode);
  }
  json j = r.to_json();
  j["checkpoint_step"] = meta.step;
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  write_json(out, j);
  RunManifest m;
  m.command = "eval";
  m.config = {{"objective", objective}, {"max", max_examples}, {"run", run_dir}};
  m.add_input(ckpt);
  add_shard_inputs(m, heldout);
  m.outputs["eval"] = out;
  write_manifest(out, m);
}

// ---------------------------------------------------------------------------
// probe

std::vector<ProbeTask> parse_tasks(const std::string& spec) {
  std::vector<ProbeTask> tasks;
  std::stringstream ss(spec);
  for (std::string t; std::getline(ss, t, ',');) {
    if (t.empty()) continue;
    const ProbeTask task = probe_task_from_name(t);
    if (std::find(tasks.begin(), tasks.end(), task) != tasks.end()) fail("probe task listed twice: ", t);
    tasks.push_back(task);
  }
  if (tasks.empty()) fail("probe: --tasks is empty");
  return tasks;
}

void run_probe_cmd(const std::string& ckpt, const std::string& corpus_path, const std::string& vocab_path,
                   const std::string& tasks_spec, std::uint64_t seed, const std::string& out) {
  require_file(ckpt, "checkpoint");
  require_file(corpus_path, "corpus");
  if (!vocab_path.empty()) require_file(vocab_path, "vocabulary");
  const auto tasks = parse_tasks(tasks_spec);
  std::optional<Vocabulary> vocab;
  if (!vocab_path.empty()) vocab = load_vocab(vocab_path);
  const Corpus corpus = load_corpus(corpus_path, vocab);
  CheckpointMeta meta;
  const auto params = load_checkpoint<float>(ckpt, &meta);
  if (vocab && static_cast<int>(vocab->size()) != meta.config.vocab_size)
    fail("vocabulary mismatch: checkpoint vocab_size=", meta.config.vocab_size, " but ", vocab_path, " has ",
         vocab->size(), " tokens");
  for (const auto& d : corpus)
    for (const auto& p : d.paragraphs)
      for (const auto& s : p)
        for (TokenId id : s)
          if (id < 0 || id >= meta.config.vocab_size)
            fail("corpus token id ", id, " is outside the checkpoint vocabulary of ", meta.config.vocab_size);

  const auto probes = build_probes(corpus, seed, tasks);
  const fs::path base = fs::path(out).replace_extension("");
  ProbeReport report;
  report.checkpoint = hex64(fnv1a(read_file(ckpt)));
  RunManifest m;
  m.command = "probe";
  m.seed = seed;
  m.config = {{"tasks", tasks_spec}};
  m.add_input(ckpt);
  m.add_input(corpus_path);
  if (!vocab_path.empty()) m.add_input(vocab_path);
  json files = json::object();
  for (ProbeTask t : tasks) {
    const auto& xs = probes.at(t);
    const std::string name = probe_task_name(t);
    const std::string probe_file = base.string() + "." + name + ".jsonl";
    const std::string pred_file = base.string() + "." + name + ".preds.jsonl";
    ProbeResult r = run_probe(params, xs);
    write_text(probe_file, probes_to_jsonl(xs));
    write_text(pred_file, predictions_to_jsonl(r.predictions));
    files[name] = {{"probes", probe_file}, {"predictions", pred_file}};
    m.outputs[name + "_probes"] = probe_file;
    m.outputs[name + "_predictions"] = pred_file;
    report.results.push_back(std::move(r));
  }
  json j = report.to_json();
  j["files"] = files;
  write_json(out, j);
  m.outputs["report"] = out;
  write_manifest(out, m);
}

// ---------------------------------------------------------------------------
// analyze-markers

void run_markers(const std::string& probe, const std::string& preds_a, const std::string& preds_b,
                 const std::string& stats, const std::string& out) {
  for (const auto& [p, what] : {std::pair{probe, "probe file"}, {preds_a, "predictions A"}, {preds_b, "predictions B"}})
    require_file(p, what);
  const auto examples = probes_from_jsonl(read_file(probe));
  const auto table = marker_analysis(examples, predictions_from_jsonl(read_file(preds_a)),
                                     predictions_from_jsonl(read_file(preds_b)),
                                     stats_from_json(read_json(stats, "corpus stats")));
  if (out.empty()) {
    std::cout << table.to_json().dump(2) << "\n";
    return;
  }
  write_json(out, table.to_json());
  RunManifest m;
  m.command = "analyze-markers";
  for (const auto& p : {probe, preds_a, preds_b, stats}) m.add_input(p);
  m.outputs["markers"] = out;
  write_manifest(out, m);
}

// ---------------------------------------------------------------------------
// report

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> rows;
  detail::for_each_jsonl(read_file(path), [&](const json& j, std::size_t) { rows.push_back(j); });
  return rows;
}

std::string fmt(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number_float()) {
    std::ostringstream os;
    os.precision(9);
    os << v.get<double>();
    return os.str();
  }
  return v.is_string() ? v.get<std::string>() : v.dump();
}

/// Writes loss.csv and k_accuracy.csv for one run; returns its summary row.
std::vector<std::string> report_run(const fs::path& run, const std::string& name) {
  const json cfg = read_json((run / "config.json").string(), "run config");
  const auto steps = read_jsonl((run / "run_log.jsonl").string());
  const auto evals = read_jsonl((run / "eval.jsonl").string());
  if (steps.empty()) fail("run ", run.string(), " has an empty run log");
  const std::string obj = cfg.at("objective").get<std::string>();
  const std::string aux = "loss_" + obj;

  fs::create_directories(run / "report");
  std::string loss = "step,loss_total," + std::string(obj == "conpono" ? "loss_conpono" : aux) + ",loss_mlm,lr\n";
  for (const auto& s : steps)
    loss += fmt(s.at("step")) + "," + fmt(s.at("loss_total")) + "," +
            fmt(s.value(obj == "conpono" ? "loss_conpono" : aux, json())) + "," + fmt(s.at("loss_mlm")) + "," +
            fmt(s.at("lr")) + "\n";
  write_file((run / "report" / "loss.csv").string(), loss);

  json final_eval;
  if (!evals.empty()) final_eval = evals.back();
  if (obj == "conpono") {
    const int K = cfg.at("K").get<int>();
    std::string acc = "k,accuracy,count\n";
    for (int k = -K; k <= K; ++k) {
      if (k == 0) continue;
      json b;
      if (!final_eval.is_null()) b = final_eval.at("per_k").value(std::to_string(k), json());
      acc += std::to_string(k) + "," + (b.is_null() ? "" : fmt(b.at("accuracy"))) + "," +
             (b.is_null() ? "0" : fmt(b.at("count"))) + "\n";
    }
    write_file((run / "report" / "k_accuracy.csv").string(), acc);
  }
  return {name,
          obj,
          cfg.at("coupling").get<std::string>(),
          fmt(cfg.at("K")),
          fmt(cfg.at("mlm_weight")),
          fmt(steps.back().at("step")),
          fmt(steps.back().at("loss_total")),
          final_eval.is_null() ? "" : fmt(final_eval.at("overall")),
          final_eval.is_null() ? "" : fmt(final_eval.at("chance")),
          final_eval.is_null() ? "0" : fmt(final_eval.at("examples"))};
}

void run_report(const std::string& run_dir) {
  require_dir(run_dir, "run directory");
  std::vector<std::pair<fs::path, std::string>> runs;
  if (fs::is_regular_file(fs::path(run_dir) / "config.json")) {
    runs.emplace_back(run_dir, fs::path(run_dir).filename().string());
  } else {
    for (const auto& e : fs::directory_iterator(run_dir))
      if (e.is_directory() && fs::is_regular_file(e.path() / "config.json"))
        runs.emplace_back(e.path(), e.path().filename().string());
    std::sort(runs.begin(), runs.end());
  }
  if (runs.empty()) fail("report: no finished runs under ", run_dir);
  std::string tsv = "run\tobjective\tcoupling\tK\tmlm_weight\tsteps\tfinal_loss\theldout_accuracy\tchance\theldout_examples\n";
  RunManifest m;
  m.command = "report";
  for (const auto& [path, name] : runs) {
    const auto row = report_run(path, name);
    for (std::size_t i = 0; i < row.size(); ++i) tsv += row[i] + (i + 1 < row.size() ? "\t" : "\n");
    m.add_input((path / "run_log.jsonl").string());
    m.add_input((path / "eval.jsonl").string());
    m.outputs[name + "_loss"] = (path / "report" / "loss.csv").string();
  }
  const fs::path report_dir = fs::path(run_dir) / "report";
  fs::create_directories(report_dir);
  write_file((report_dir / "summary.tsv").string(), tsv);
  m.outputs["summary"] = (report_dir / "summary.tsv").string();
  write_manifest(report_dir.string(), m);
}

int main_impl(int argc, char** argv) {
  CLI::App app{"Inter-sentence contrastive pretraining pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Segment text files or generate a synthetic corpus");
  c_ingest->add_option("--in", ingest.inputs, "Plain-text inputs (=== separates documents)");
  c_ingest->add_option("--out", ingest.out, "Corpus JSON Lines output")->required();
  c_ingest->add_flag("--synthetic", ingest.synthetic, "Generate the synthetic corpus");
  c_ingest->add_option("--docs", ingest.docs, "Synthetic documents");
  c_ingest->add_option("--paragraphs", ingest.paragraphs, "Synthetic paragraphs per document");
  c_ingest->add_option("--seed", ingest.seed, "Synthetic seed");
  c_ingest->add_option("--first-doc-id", ingest.first_doc_id, "Id of the first document");

  std::string v_corpus, v_out;
  std::size_t v_size = 8000;
  auto* c_vocab = app.add_subcommand("vocab", "Build a frequency-ranked vocabulary");
  c_vocab->add_option("--corpus", v_corpus)->required();
  c_vocab->add_option("--size", v_size, "Vocabulary size including specials");
  c_vocab->add_option("--out", v_out)->required();

  ExamplesArgs ex;
  auto* c_ex = app.add_subcommand("examples", "Sample training instances and baseline pairs into shards");
  c_ex->add_option("--corpus", ex.corpus)->required();
  c_ex->add_option("--vocab", ex.vocab)->required();
  c_ex->add_option("--K", ex.window.K, "Maximum sentence distance");
  c_ex->add_option("--anchor-len", ex.window.anchor_len);
  c_ex->add_option("--target-len", ex.window.target_len);
  c_ex->add_option("--ks-per-paragraph", ex.window.ks_per_paragraph);
  c_ex->add_option("--num-hard", ex.window.num_hard);
  c_ex->add_option("--num-random", ex.window.num_random);
  c_ex->add_option("--mask-rate", ex.window.mask_rate);
  c_ex->add_option("--max-seq", ex.window.max_seq);
  c_ex->add_option("--seed", ex.seed);
  c_ex->add_option("--out", ex.out, "Shard directory")->required();

  std::string t_config, t_grid, t_shards, t_out;
  auto* c_train = app.add_subcommand("train", "Train one config or a grid of configs");
  c_train->add_option("--config", t_config, "Flat JSON train config");
  c_train->add_option("--grid", t_grid, "Grid file enumerating objective/coupling/K/mlm_weight");
  c_train->add_option("--shards", t_shards)->required();
  c_train->add_option("--out", t_out, "Run directory")->required();

  std::string e_ckpt, e_heldout, e_run, e_obj = "conpono", e_out;
  std::int64_t e_max = 0;
  auto* c_eval = app.add_subcommand("eval", "Per-distance accuracy of a checkpoint");
  c_eval->add_option("--checkpoint", e_ckpt)->required();
  c_eval->add_option("--heldout", e_heldout, "Shard directory")->required();
  c_eval->add_option("--run", e_run, "Restrict to this run's held-out documents");
  c_eval->add_option("--objective", e_obj, "conpono, nsp or bso");
  c_eval->add_option("--max", e_max, "Cap on evaluated examples");
  c_eval->add_option("--out", e_out, "JSON output (stdout if absent)");

  std::string p_ckpt, p_corpus, p_vocab, p_tasks = "sp,bso,dc", p_out;
  std::uint64_t p_seed = 1;
  auto* c_probe = app.add_subcommand("probe", "Frozen-encoder logistic probes");
  c_probe->add_option("--checkpoint", p_ckpt)->required();
  c_probe->add_option("--corpus", p_corpus, "Probe corpus, disjoint from pretraining")->required();
  c_probe->add_option("--vocab", p_vocab, "Needed when the corpus holds surface tokens");
  c_probe->add_option("--tasks", p_tasks);
  c_probe->add_option("--seed", p_seed);
  c_probe->add_option("--out", p_out, "Report JSON")->required();

  std::string m_probe, m_a, m_b, m_stats, m_out;
  auto* c_markers = app.add_subcommand("analyze-markers", "Discourse markers in two models' disagreement sets");
  c_markers->add_option("--probe", m_probe)->required();
  c_markers->add_option("--preds-a", m_a)->required();
  c_markers->add_option("--preds-b", m_b)->required();
  c_markers->add_option("--stats", m_stats)->required();
  c_markers->add_option("--out", m_out, "JSON output (stdout if absent)");

  std::string r_run;
  auto* c_report = app.add_subcommand("report", "TSV summary and plot-ready CSVs for finished runs");
  c_report->add_option("--run", r_run)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 2;
  }

  if (c_ingest->parsed()) run_ingest(ingest);
  if (c_vocab->parsed()) run_vocab(v_corpus, v_size, v_out);
  if (c_ex->parsed()) run_examples(ex);
  if (c_train->parsed()) run_train(t_config, t_grid, t_shards, t_out);
  if (c_eval->parsed()) run_eval(e_ckpt, e_heldout, e_run, e_obj, e_max, e_out);
  if (c_probe->parsed()) run_probe_cmd(p_ckpt, p_corpus, p_vocab, p_tasks, p_seed, p_out);
  if (c_markers->parsed()) run_markers(m_probe, m_a, m_b, m_stats, m_out);
  if (c_report->parsed()) run_report(r_run);
  return 0;
}

}  // namespace
}  // namespace conpono::cli

int main(int argc, char** argv) {
  try {
    return conpono::cli::main_impl(argc, argv);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
}
