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

#include <filesystem>
#include <string>

#include <json.hpp>

#include "conpono/trainer.hpp"

namespace conpono {

// On-disk shard directory: meta.json plus one JSON Lines file per instance
// kind (instances.jsonl, nsp.jsonl, bso.jsonl).

inline constexpr const char* kShardMetaFile = "meta.json";
inline constexpr const char* kShardInstanceFile = "instances.jsonl";
inline constexpr const char* kShardNspFile = "nsp.jsonl";
inline constexpr const char* kShardBsoFile = "bso.jsonl";

inline nlohmann::json shard_meta_to_json(const ShardSet& s) {
  return {{"window", s.window},
          {"sampler_seed", s.sampler_seed},
          {"vocab_size", s.vocab_size},
          {"instances", s.instances.size()},
          {"nsp", s.nsp.size()},
          {"bso", s.bso.size()}};
}

inline void save_shards(const std::string& dir, const ShardSet& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string insts, nsp, bso;
  for (const auto& i : s.instances) insts += instance_to_json(i).dump() + "\n";
  for (const auto& p : s.nsp) nsp += pair_to_json(p).dump() + "\n";
  for (const auto& p : s.bso) bso += pair_to_json(p).dump() + "\n";
  write_file((fs::path(dir) / kShardInstanceFile).string(), insts);
  write_file((fs::path(dir) / kShardNspFile).string(), nsp);
  write_file((fs::path(dir) / kShardBsoFile).string(), bso);
  write_file((fs::path(dir) / kShardMetaFile).string(), shard_meta_to_json(s).dump(2) + "\n");
}

inline ShardSet load_shards(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root)) fail("shard directory not found: ", dir);
  ShardSet s;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file((root / kShardMetaFile).string()));
    s.window = meta.at("window").get<WindowConfig>();
    s.sampler_seed = meta.at("sampler_seed").get<std::uint64_t>();
    s.vocab_size = meta.at("vocab_size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail("malformed shard meta.json in ", dir, ": ", e.what());
  }
  detail::for_each_jsonl(read_file((root / kShardInstanceFile).string()),
                         [&](const nlohmann::json& j, std::size_t) { s.instances.push_back(instance_from_json(j)); });
  detail::for_each_jsonl(read_file((root / kShardNspFile).string()),
                         [&](const nlohmann::json& j, std::size_t) { s.nsp.push_back(pair_from_json(j)); });
  detail::for_each_jsonl(read_file((root / kShardBsoFile).string()),
                         [&](const nlohmann::json& j, std::size_t) { s.bso.push_back(pair_from_json(j)); });
  if (s.instances.size() != meta.value("instances", s.instances.size()))
    fail("shard ", dir, " lists ", meta["instances"].dump(), " instances but holds ", s.instances.size());
  return s;
}

}  // namespace conpono
