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

// Checkpoint layout (all integers little-endian):
//
//   "CNPN"            4-byte magic
//   u32               format version
//   u64               header length in bytes
//   header            JSON: {"config", "step", "seed", "params": [{"name", "shape"}...]}
//   f32 * N           parameter values, concatenated in header order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include <json.hpp>

#include "conpono/encoder.hpp"

namespace conpono {

inline constexpr std::string_view kCheckpointMagic = "CNPN";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  EncoderConfig config;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
};

namespace detail {
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class U>
void put_le(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <class U>
U get_le(std::string_view bytes, std::size_t& pos, const char* what) {
  if (pos > bytes.size() || bytes.size() - pos < sizeof(U)) fail("checkpoint truncated while reading ", what);
  U v;
  std::memcpy(&v, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}
}  // namespace detail

template <class T>
std::string serialize_checkpoint(const EncoderParams<T>& params, std::int64_t step, std::uint64_t seed) {
  nlohmann::json header;
  header["config"] = params.config();
  header["step"] = step;
  header["seed"] = seed;
  header["params"] = nlohmann::json::array();
  const auto& ps = params.params();
  for (std::size_t i = 0; i < ps.size(); ++i) header["params"].push_back({{"name", ps.name(i)}, {"shape", ps[i].shape()}});
  const std::string h = header.dump();

  std::string out(kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, h.size());
  out += h;
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (T v : ps[i].values()) detail::put_le<float>(out, static_cast<float>(v));
  return out;
}

/// Parses and validates a checkpoint. Errors name the offending field or
/// parameter.
template <class T>
EncoderParams<T> deserialize_checkpoint(std::string_view bytes, CheckpointMeta* meta = nullptr) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    fail("not a checkpoint: bad magic (expected \"CNPN\")");
  std::size_t pos = kCheckpointMagic.size();
  const auto version = detail::get_le<std::uint32_t>(bytes, pos, "format version");
  if (version != kCheckpointVersion)
    fail("unsupported checkpoint format version ", version, " (this build reads ", kCheckpointVersion, ")");
  const auto hlen = detail::get_le<std::uint64_t>(bytes, pos, "header length");
  if (hlen > bytes.size() - pos) fail("checkpoint truncated inside the JSON header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint header is not valid JSON: ", e.what());
  }
  pos += hlen;

  CheckpointMeta m;
  nn::ParamSet<T> values;
  try {
    m.config = header.at("config").get<EncoderConfig>();
    m.step = header.at("step").get<std::int64_t>();
    m.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& p : header.at("params")) {
      const auto name = p.at("name").get<std::string>();
      const auto shape = p.at("shape").get<nn::Shape>();
      const std::size_t n = nn::shape_size(shape);
      if ((bytes.size() - pos) / sizeof(float) < n) fail("checkpoint truncated inside parameter ", name);
      std::vector<T> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<T>(detail::get_le<float>(bytes, pos, name.c_str()));
      values.add(name, nn::Tensor<T>(shape, std::move(v)));
    }
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint header is missing fields: ", e.what());
  }
  if (pos != bytes.size()) fail("checkpoint has ", bytes.size() - pos, " trailing bytes after the last parameter");
  if (meta) *meta = m;
  return EncoderParams<T>::from_values(m.config, values);
}

template <class T>
void save_checkpoint(const std::string& path, const EncoderParams<T>& params, std::int64_t step, std::uint64_t seed) {
  write_file(path, serialize_checkpoint(params, step, seed));
}

template <class T>
EncoderParams<T> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
  return deserialize_checkpoint<T>(read_file(path), meta);
}

}  // namespace conpono
