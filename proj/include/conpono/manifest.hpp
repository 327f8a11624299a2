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

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "conpono/common.hpp"

namespace conpono {

inline constexpr const char* kToolVersion = "0.1.0";

/// Provenance record written beside every pipeline output. Contains no
/// timestamps, so identical inputs give identical manifests.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> digest
  std::map<std::string, std::string> outputs;  // role -> path

  void add_input(const std::string& path) { inputs[path] = hex64(fnv1a(read_file(path))); }

  std::string config_hash() const { return hex64(fnv1a(config.dump())); }

  nlohmann::json to_json() const {
    return {{"command", command},     {"tool_version", kToolVersion}, {"config", config},
            {"config_hash", config_hash()}, {"seed", seed},           {"inputs", inputs},
            {"outputs", outputs}};
  }
};

}  // namespace conpono
