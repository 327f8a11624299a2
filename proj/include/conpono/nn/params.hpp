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

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "conpono/nn/tape.hpp"

namespace conpono::nn {

/// Ordered collection of named tensors. The insertion order is the
/// serialization order and the order gradients are reduced in.
template <class T>
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) fail("duplicate parameter name: ", name);
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& operator[](std::size_t i) { return values_.at(i); }
  const Tensor<T>& operator[](std::size_t i) const { return values_.at(i); }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail("unknown parameter: ", name);
    return it->second;
  }
  Tensor<T>& operator[](const std::string& name) { return values_[index(name)]; }
  const Tensor<T>& operator[](const std::string& name) const { return values_[index(name)]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor<T>(values_[i].shape()));
    return out;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

  /// Binds every tensor to `tape` without copying.
  std::vector<Var<T>> bind(Tape<T>& tape, bool requires_grad = true) const {
    std::vector<Var<T>> vars;
    vars.reserve(size());
    for (const auto& v : values_) vars.push_back(tape.bind(v, requires_grad));
    return vars;
  }

  /// Adds the tape gradients of `vars` into this set (which must be shaped
  /// like the bound parameters).
  void accumulate_grads(const Tape<T>& tape, const std::vector<Var<T>>& vars, T weight = T(1)) {
    for (std::size_t i = 0; i < size(); ++i) {
      const Tensor<T>* g = tape.grad_if_any(vars[i]);
      if (!g) continue;
      Tensor<T>& dst = values_[i];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += weight * (*g)[j];
    }
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace conpono::nn
