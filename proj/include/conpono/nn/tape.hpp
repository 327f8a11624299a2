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

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "conpono/nn/tensor.hpp"

namespace conpono::nn {

template <class T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; only valid while the
/// tape is alive.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode recording of primitive ops.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order and backward() is a single reverse sweep. Leaves bound
/// with bind() reference external storage (model parameters) without copying;
/// that storage must outlive the tape.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value no gradient flows into.
  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, false, {}, {}); }

  /// A leaf owned by the tape whose gradient is tracked.
  Var<T> variable(Tensor<T> value) { return push(std::move(value), nullptr, true, {}, {}); }

  /// A leaf that aliases external storage.
  Var<T> bind(const Tensor<T>& external, bool requires_grad = true) {
    return push(Tensor<T>{}, &external, requires_grad, {}, {});
  }

  /// Records an op output. The output tracks gradients if any parent does; the
  /// backward function is dropped otherwise.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
    if (!needs) return push(std::move(value), nullptr, false, {}, {});
    return push(std::move(value), nullptr, true, std::move(parents), std::move(backward));
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.own;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Mutable gradient accumulator for a node; zero-filled on first access.
  Tensor<T>& grad_ref(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = Tensor<T>(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient of the last backward() target with respect to v; zeros when v
  /// is not on any path to it.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    return n.has_grad ? n.grad : Tensor<T>(value(v.id).shape());
  }
  const Tensor<T>* grad_if_any(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    return n.has_grad ? &n.grad : nullptr;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a scalar loss.
  void backward(Var<T> loss) {
    if (value(loss.id).size() != 1)
      fail("backward requires a scalar loss, got shape ", shape_str(value(loss.id).shape()));
    backward(loss, Tensor<T>(value(loss.id).shape(), T(1)));
  }

  /// Vector-Jacobian product seeded with `seed` at `out`.
  void backward(Var<T> out, const Tensor<T>& seed) {
    if (swept_) fail("backward already ran on this tape");
    if (seed.shape() != value(out.id).shape())
      fail("backward seed shape ", shape_str(seed.shape()), " does not match output ",
           shape_str(value(out.id).shape()));
    swept_ = true;
    if (!nodes_.at(out.id).requires_grad) return;
    grad_ref(out.id) = seed;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, const Tensor<T>* external, bool requires_grad,
              std::vector<std::size_t> parents, BackwardFn backward) {
    Node n;
    n.own = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace conpono::nn
