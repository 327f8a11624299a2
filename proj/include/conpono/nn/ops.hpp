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

// Differentiable primitives. Each op computes its forward value eagerly and
// records a closure that pushes the output gradient to its parents.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "conpono/nn/tape.hpp"

namespace conpono::nn {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
ConstMatMap<T> mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}
template <class T>
MatMap<T> mat(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

template <class T>
void require_rank2(const char* op, const Tensor<T>& t) {
  if (t.rank() != 2) fail(op, ": expected a matrix, got shape ", shape_str(t.shape()));
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace detail

/// [m x k] * [k x n] -> [m x n]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  detail::require_rank2("matmul", av);
  detail::require_rank2("matmul", bv);
  if (av.dim(1) != bv.dim(0))
    fail("matmul: shape mismatch ", shape_str(av.shape()), " vs ", shape_str(bv.shape()));
  Tensor<T> out({av.dim(0), bv.dim(1)});
  detail::mat(out).noalias() = detail::mat(av) * detail::mat(bv);
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    if (tp.requires_grad(ai))
      detail::mat(tp.grad_ref(ai)).noalias() += detail::mat(g) * detail::mat(tp.value(bi)).transpose();
    if (tp.requires_grad(bi))
      detail::mat(tp.grad_ref(bi)).noalias() += detail::mat(tp.value(ai)).transpose() * detail::mat(g);
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  const Tensor<T>& av = a.value();
  detail::require_rank2("transpose", av);
  Tensor<T> out({av.dim(1), av.dim(0)});
  detail::mat(out) = detail::mat(av).transpose();
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape<T>& tp, std::size_t self) {
    detail::mat(tp.grad_ref(ai)) += detail::mat(tp.grad_ref(self)).transpose();
  });
}

/// Elementwise sum. `b` may also be a row vector ([n] or [1 x n]) broadcast
/// over the rows of a matrix `a`.
template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool row_bcast = !same && av.rank() == 2 && bv.size() == av.cols() &&
                         (bv.rank() == 1 || (bv.rank() == 2 && bv.dim(0) == 1));
  if (!same && !row_bcast)
    fail("add: shape mismatch ", shape_str(av.shape()), " vs ", shape_str(bv.shape()));
  Tensor<T> out = av;
  if (same) {
    detail::accumulate(out, bv);
  } else {
    const std::size_t n = av.cols();
    for (std::size_t r = 0; r < av.rows(); ++r)
      for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  }
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id, same](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    if (tp.requires_grad(ai)) detail::accumulate(tp.grad_ref(ai), g);
    if (!tp.requires_grad(bi)) return;
    Tensor<T>& gb = tp.grad_ref(bi);
    if (same) {
      detail::accumulate(gb, g);
    } else {
      const std::size_t n = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  });
}

/// Elementwise product of equally shaped tensors.
template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape())
    fail("mul: shape mismatch ", shape_str(av.shape()), " vs ", shape_str(bv.shape()));
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [ai = a.id, bi = b.id](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    if (tp.requires_grad(ai)) {
      Tensor<T>& ga = tp.grad_ref(ai);
      const Tensor<T>& bv = tp.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(bi)) {
      Tensor<T>& gb = tp.grad_ref(bi);
      const Tensor<T>& av = tp.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (T& v : out.values()) v *= s;
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, s](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

/// Sum of all entries, as a scalar.
template <class T>
Var<T> sum(Var<T> a) {
  T acc = 0;
  for (T v : a.value().values()) acc += v;
  return a.tape->record(Tensor<T>::scalar(acc), {a.id}, [ai = a.id](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad_ref(self)[0];
    for (T& v : tp.grad_ref(ai).values()) v += g;
  });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (shape_size(shape) != a.value().size())
    fail("reshape: cannot view ", shape_str(a.shape()), " as ", shape_str(shape));
  return a.tape->record(a.value().reshaped(std::move(shape)), {a.id}, [ai = a.id](Tape<T>& tp, std::size_t self) {
    detail::accumulate(tp.grad_ref(ai), tp.grad_ref(self));
  });
}

/// Rows of `table` selected by `ids`: [V x H] -> [n x H]. Gradients are
/// scatter-added back, so repeated ids accumulate.
template <class T>
Var<T> embedding_gather(Var<T> table, std::span<const std::int32_t> ids) {
  const Tensor<T>& tv = table.value();
  detail::require_rank2("embedding_gather", tv);
  const std::size_t width = tv.dim(1);
  Tensor<T> out({ids.size(), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.dim(0))
      fail("embedding_gather: id ", ids[r], " outside table of shape ", shape_str(tv.shape()));
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[r]) * width, width, out.data() + r * width);
  }
  std::vector<std::int32_t> kept(ids.begin(), ids.end());
  return table.tape->record(std::move(out), {table.id}, [ti = table.id, kept = std::move(kept), width](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& gt = tp.grad_ref(ti);
    for (std::size_t r = 0; r < kept.size(); ++r) {
      T* dst = gt.data() + static_cast<std::size_t>(kept[r]) * width;
      const T* src = g.data() + r * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
}

/// Softmax along `axis` (0 or 1 for matrices, 0 for vectors). Uses
/// max-subtraction, so entries of -inf-like magnitude underflow to exact 0.
template <class T>
Var<T> softmax(Var<T> a, int axis = -1) {
  const Tensor<T>& av = a.value();
  if (av.rank() < 1 || av.rank() > 2) fail("softmax: unsupported shape ", shape_str(av.shape()));
  if (axis < 0) axis += static_cast<int>(av.rank());
  if (axis < 0 || axis >= static_cast<int>(av.rank()))
    fail("softmax: axis ", axis, " out of range for shape ", shape_str(av.shape()));
  const std::size_t rows = av.rows(), cols = av.cols();
  // Walk "lanes": for the last axis a lane is a row, for axis 0 a column.
  const bool along_rows = av.rank() == 1 || axis == 1;
  const std::size_t lanes = along_rows ? rows : cols;
  const std::size_t len = along_rows ? cols : rows;
  const std::size_t stride = along_rows ? 1 : cols;
  auto base = [=](std::size_t lane) { return along_rows ? lane * cols : lane; };
  Tensor<T> out(av.shape());
  for (std::size_t l = 0; l < lanes; ++l) {
    const T* x = av.data() + base(l);
    T* y = out.data() + base(l);
    T mx = x[0];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[i * stride]);
    T z = 0;
    for (std::size_t i = 0; i < len; ++i) z += (y[i * stride] = std::exp(x[i * stride] - mx));
    for (std::size_t i = 0; i < len; ++i) y[i * stride] /= z;
  }
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, lanes, len, stride, base](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& y = tp.value(self);
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& ga = tp.grad_ref(ai);
    for (std::size_t l = 0; l < lanes; ++l) {
      const std::size_t o = base(l);
      T dot = 0;
      for (std::size_t i = 0; i < len; ++i) dot += g[o + i * stride] * y[o + i * stride];
      for (std::size_t i = 0; i < len; ++i)
        ga[o + i * stride] += y[o + i * stride] * (g[o + i * stride] - dot);
    }
  });
}

/// Normalizes each row over the last axis, then applies gain and bias.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-12)) {
  const Tensor<T>& xv = x.value();
  const std::size_t rows = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n)
    fail("layer_norm: gain/bias shapes ", shape_str(gamma.shape()), ", ", shape_str(beta.shape()),
         " do not match input ", shape_str(xv.shape()));
  Tensor<T> out(xv.shape());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  const T* g = gamma.value().data();
  const T* b = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (row[c] - mean) * inv_std[r];
      out[r * n + c] = xhat[r * n + c] * g[c] + b[c];
    }
  }
  return x.tape->record(
      std::move(out), {x.id, gamma.id, beta.id},
      [xi = x.id, gi = gamma.id, bi = beta.id, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& tp, std::size_t self) {
        const Tensor<T>& gy = tp.grad_ref(self);
        const T* gain = tp.value(gi).data();
        if (tp.requires_grad(gi)) {
          Tensor<T>& gg = tp.grad_ref(gi);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) gg[c] += gy[r * n + c] * xhat[r * n + c];
        }
        if (tp.requires_grad(bi)) {
          Tensor<T>& gb = tp.grad_ref(bi);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) gb[c] += gy[r * n + c];
        }
        if (!tp.requires_grad(xi)) return;
        Tensor<T>& gx = tp.grad_ref(xi);
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_d = 0, mean_dx = 0;
          for (std::size_t c = 0; c < n; ++c) {
            const T d = gy[r * n + c] * gain[c];
            mean_d += d;
            mean_dx += d * xhat[r * n + c];
          }
          mean_d /= static_cast<T>(n);
          mean_dx /= static_cast<T>(n);
          for (std::size_t c = 0; c < n; ++c) {
            const T d = gy[r * n + c] * gain[c];
            gx[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
          }
        }
      });
}

/// Exact (erf) GELU.
template <class T>
Var<T> gelu(Var<T> a) {
  Tensor<T> out = a.value();
  for (T& v : out.values()) v = T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& x = tp.value(ai);
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& ga = tp.grad_ref(ai);
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
      ga[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
}

template <class T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value();
  for (T& v : out.values()) v = std::tanh(v);
  return a.tape->record(std::move(out), {a.id}, [ai = a.id](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& y = tp.value(self);
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

/// Inverted dropout driven by an explicit seed. rate == 0 is the identity
/// and records nothing.
template <class T>
Var<T> dropout(Var<T> a, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) fail("dropout: rate must be < 1, got ", rate);
  std::mt19937_64 rng(seed);
  // An element is dropped when a uniform 64-bit draw falls below rate * 2^64.
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(rate, 64));
  const T scale_kept = T(1) / static_cast<T>(1.0 - rate);
  std::vector<T> factor(a.value().size());
  for (T& f : factor) f = rng() < threshold ? T(0) : scale_kept;
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, factor = std::move(factor)](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor[i];
  });
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits`. A vector of logits takes exactly one target.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
  const Tensor<T>& lv = logits.value();
  if (lv.rank() < 1 || lv.rank() > 2) fail("cross_entropy: unsupported logits shape ", shape_str(lv.shape()));
  const std::size_t rows = lv.rows(), width = lv.cols();
  if (targets.size() != rows)
    fail("cross_entropy: ", targets.size(), " targets for logits of shape ", shape_str(lv.shape()));
  std::vector<T> probs(lv.size());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= width)
      fail("cross_entropy: target ", t, " outside logits of shape ", shape_str(lv.shape()));
    const T* x = lv.data() + r * width;
    T mx = x[0];
    for (std::size_t c = 1; c < width; ++c) mx = std::max(mx, x[c]);
    T z = 0;
    for (std::size_t c = 0; c < width; ++c) z += std::exp(x[c] - mx);
    const T lse = mx + std::log(z);
    total += lse - x[t];
    for (std::size_t c = 0; c < width; ++c) probs[r * width + c] = std::exp(x[c] - lse);
  }
  std::vector<std::int32_t> kept(targets.begin(), targets.end());
  return logits.tape->record(
      Tensor<T>::scalar(total / static_cast<T>(rows)), {logits.id},
      [li = logits.id, probs = std::move(probs), kept = std::move(kept), width](Tape<T>& tp, std::size_t self) {
        const T g = tp.grad_ref(self)[0] / static_cast<T>(kept.size());
        Tensor<T>& gl = tp.grad_ref(li);
        for (std::size_t r = 0; r < kept.size(); ++r) {
          for (std::size_t c = 0; c < width; ++c) gl[r * width + c] += g * probs[r * width + c];
          gl[r * width + static_cast<std::size_t>(kept[r])] -= g;
        }
      });
}

/// Concatenates matrices along axis 0 or 1 (vectors along their only axis).
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) fail("concat: no inputs");
  const Tensor<T>& first = parts.front().value();
  if (first.rank() < 1 || first.rank() > 2) fail("concat: unsupported shape ", shape_str(first.shape()));
  const bool vec = first.rank() == 1;
  if (vec && axis != 0) fail("concat: vectors only concatenate along axis 0");
  if (!vec && axis != 0 && axis != 1) fail("concat: axis ", axis, " unsupported");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    const Tensor<T>& v = p.value();
    const bool ok = v.rank() == first.rank() &&
                    (vec || (axis == 0 ? v.dim(1) == first.dim(1) : v.dim(0) == first.dim(0)));
    if (!ok) fail("concat: shape mismatch ", shape_str(first.shape()), " vs ", shape_str(v.shape()));
    extents.push_back(vec ? v.size() : v.dim(static_cast<std::size_t>(axis)));
    total += extents.back();
  }
  Shape out_shape = vec ? Shape{total} : (axis == 0 ? Shape{total, first.dim(1)} : Shape{first.dim(0), total});
  Tensor<T> out(out_shape);
  const std::size_t out_cols = out.cols();
  const std::size_t rows = vec ? 1 : out.rows();
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    ids.push_back(parts[k].id);
    if (vec || axis == 0) {
      std::copy(v.values().begin(), v.values().end(), out.data() + offset * (vec ? 1 : out_cols));
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(v.data() + r * extents[k], extents[k], out.data() + r * out_cols + offset);
    }
    offset += extents[k];
  }
  const bool by_rows = vec || axis == 0;
  return parts.front().tape->record(
      std::move(out), ids, [ids, extents, by_rows, rows, out_cols](Tape<T>& tp, std::size_t self) {
        const Tensor<T>& g = tp.grad_ref(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (tp.requires_grad(ids[k])) {
            Tensor<T>& gk = tp.grad_ref(ids[k]);
            if (by_rows) {
              const std::size_t base = offset * (gk.rank() == 1 ? 1 : out_cols);
              for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[base + i];
            } else {
              for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < extents[k]; ++c) gk[r * extents[k] + c] += g[r * out_cols + offset + c];
            }
          }
          offset += extents[k];
        }
      });
}

/// Half-open range [begin, end) along axis 0 or 1.
template <class T>
Var<T> slice(Var<T> a, int axis, std::size_t begin, std::size_t end) {
  const Tensor<T>& av = a.value();
  if (av.rank() < 1 || av.rank() > 2) fail("slice: unsupported shape ", shape_str(av.shape()));
  const bool vec = av.rank() == 1;
  if ((vec && axis != 0) || (!vec && axis != 0 && axis != 1)) fail("slice: axis ", axis, " unsupported");
  const std::size_t extent = av.dim(static_cast<std::size_t>(axis));
  if (begin > end || end > extent)
    fail("slice: range [", begin, ",", end, ") out of bounds for shape ", shape_str(av.shape()));
  const std::size_t n = end - begin;
  const std::size_t cols = av.cols();
  Tensor<T> out;
  if (vec) {
    out = Tensor<T>({n}, std::vector<T>(av.data() + begin, av.data() + end));
  } else if (axis == 0) {
    out = Tensor<T>({n, cols}, std::vector<T>(av.data() + begin * cols, av.data() + end * cols));
  } else {
    out = Tensor<T>({av.rows(), n});
    for (std::size_t r = 0; r < av.rows(); ++r) std::copy_n(av.data() + r * cols + begin, n, out.data() + r * n);
  }
  const bool by_rows = vec || axis == 0;
  return a.tape->record(std::move(out), {a.id}, [ai = a.id, by_rows, begin, n, cols](Tape<T>& tp, std::size_t self) {
    const Tensor<T>& g = tp.grad_ref(self);
    Tensor<T>& ga = tp.grad_ref(ai);
    if (by_rows) {
      const std::size_t base = begin * (ga.rank() == 1 ? 1 : cols);
      for (std::size_t i = 0; i < g.size(); ++i) ga[base + i] += g[i];
    } else {
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) ga[r * cols + begin + c] += g[r * n + c];
    }
  });
}

}  // namespace conpono::nn
