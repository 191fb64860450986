#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nargen/tape.hpp"
#include "nargen/tensor.hpp"

namespace nargen {

enum class AttentionMode { bidirectional, causal };

// Additive score mask for blocked attention entries. Finite on purpose: with
// max-subtracted softmax it underflows to an exact zero weight, so blocked
// positions contribute nothing, bit for bit.
inline constexpr double kAttentionMaskValue = -1e9;

namespace detail {

inline int normalize_axis(int axis, int rank) {
  if (axis < -rank || axis >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return axis < 0 ? axis + rank : axis;
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pure value ops.
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dims disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor<Scalar> y(Shape{a.dim(0), b.dim(1)});
  y.mat().noalias() = a.mat() * b.mat();
  return y;
}

// a [m,k] times b' [n,k]^T -> [m,n]; avoids materializing the transpose.
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) +
                         "^T");
  }
  Tensor<Scalar> y(Shape{a.dim(0), b.dim(0)});
  y.mat().noalias() = a.mat() * b.mat().transpose();
  return y;
}

// x [n,k] * w [k,m] + row-broadcast bias [m].
template <typename Scalar>
Tensor<Scalar> affine(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.size() != w.dim(1)) {
    throw DimensionError("affine: " + shape_string(x.shape()) + " * " + shape_string(w.shape()) +
                         " + " + shape_string(b.shape()));
  }
  Tensor<Scalar> y(Shape{x.dim(0), w.dim(1)});
  y.mat().noalias() = x.mat() * w.mat();
  y.mat().rowwise() += b.vec().transpose();
  return y;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<Scalar> y(a.shape());
  y.vec() = a.vec() + b.vec();
  return y;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  Tensor<Scalar> y(a.shape());
  y.vec() = a.vec() * c;
  return y;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  double acc = 0.0;
  for (Index i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]);
  return Tensor<Scalar>::scalar(static_cast<Scalar>(acc));
}

template <typename Scalar>
Scalar gelu_value(Scalar x) {
  const double xd = static_cast<double>(x);
  return static_cast<Scalar>(0.5 * xd * (1.0 + std::erf(xd * 0.70710678118654752440)));
}

template <typename Scalar>
Scalar gelu_derivative(Scalar x) {
  const double xd = static_cast<double>(x);
  const double cdf = 0.5 * (1.0 + std::erf(xd * 0.70710678118654752440));
  const double pdf = std::exp(-0.5 * xd * xd) * 0.39894228040143267794;
  return static_cast<Scalar>(cdf + xd * pdf);
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  for (Index i = 0; i < x.size(); ++i) y[i] = gelu_value(x[i]);
  return y;
}

// Max-subtracted softmax along `axis`; immune to large-magnitude logits.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis = -1) {
  const int ax = detail::normalize_axis(axis, std::max(x.rank(), 1));
  const auto& shape = x.shape();
  const Index len = x.rank() == 0 ? 1 : shape[static_cast<std::size_t>(ax)];
  Index outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < x.rank(); ++i) inner *= shape[static_cast<std::size_t>(i)];

  Tensor<Scalar> y(x.shape());
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < len; ++j) mx = std::max(mx, static_cast<double>(x[base + j * inner]));
      double total = 0.0;
      for (Index j = 0; j < len; ++j) {
        const double e = std::exp(static_cast<double>(x[base + j * inner]) - mx);
        y[base + j * inner] = static_cast<Scalar>(e);
        total += e;
      }
      const double norm = 1.0 / total;
      for (Index j = 0; j < len; ++j) {
        y[base + j * inner] = static_cast<Scalar>(static_cast<double>(y[base + j * inner]) * norm);
      }
    }
  }
  return y;
}

// Per-row zero-mean unit-variance over the trailing dimension, then affine.
// Means and variances accumulate in double regardless of Scalar.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps) {
  const Index d = gamma.size();
  if (beta.size() != d || d == 0 || x.size() % d != 0 ||
      (x.rank() >= 1 && x.dim(x.rank() - 1) != d)) {
    throw DimensionError("layer_norm: x " + shape_string(x.shape()) + ", gamma " +
                         shape_string(gamma.shape()));
  }
  const Index rows = x.size() / d;
  Tensor<Scalar> y(x.shape());
  for (Index r = 0; r < rows; ++r) {
    const Index base = r * d;
    double mean = 0.0;
    for (Index j = 0; j < d; ++j) mean += static_cast<double>(x[base + j]);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (Index j = 0; j < d; ++j) {
      const double c = static_cast<double>(x[base + j]) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (Index j = 0; j < d; ++j) {
      const double xhat = (static_cast<double>(x[base + j]) - mean) * inv;
      y[base + j] =
          static_cast<Scalar>(xhat * static_cast<double>(gamma[j]) + static_cast<double>(beta[j]));
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank-2");
  const Index v = table.dim(0), d = table.dim(1);
  Tensor<Scalar> y(Shape{static_cast<Index>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t id = ids[i];
    if (id < 0 || id >= v) {
      throw DimensionError("gather_rows: id " + std::to_string(id) + " out of range [0," +
                           std::to_string(v) + ")");
    }
    y.mat().row(static_cast<Index>(i)) = table.mat().row(id);
  }
  return y;
}

struct CrossEntropyInfo {
  double value = 0.0;
  Index masked_count = 0;
  // All-zero mask is defined as loss 0; flagged so callers can warn.
  bool empty_mask = false;
};

// Mean over masked rows of -log softmax(logits)[target]. Accumulates in
// double; nonnegative by construction.
template <typename Scalar>
CrossEntropyInfo cross_entropy_value(const Tensor<Scalar>& logits,
                                     std::span<const std::int32_t> targets,
                                     std::span<const std::uint8_t> mask) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [N,V]");
  const Index n = logits.dim(0), v = logits.dim(1);
  if (static_cast<Index>(targets.size()) != n || static_cast<Index>(mask.size()) != n) {
    throw DimensionError("cross_entropy: targets/mask length must match logits rows");
  }
  CrossEntropyInfo info;
  double total = 0.0;
  for (Index r = 0; r < n; ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    const std::int32_t t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= v) {
      throw DimensionError("cross_entropy: target id " + std::to_string(t) + " out of range");
    }
    const Index base = r * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(logits[base + j]));
    double sum_exp = 0.0;
    for (Index j = 0; j < v; ++j) sum_exp += std::exp(static_cast<double>(logits[base + j]) - mx);
    total += mx + std::log(sum_exp) - static_cast<double>(logits[base + t]);
    ++info.masked_count;
  }
  if (info.masked_count == 0) {
    info.empty_mask = true;
    info.value = 0.0;
  } else {
    info.value = total / static_cast<double>(info.masked_count);
  }
  return info;
}

// Fused multi-head attention over row-packed activations. q,k,v are
// [batch*seq, d]; heads live in column blocks, so no reshapes are needed.
// In causal mode position i attends to j <= i. If save_probs is given it
// receives the post-softmax weights as [batch*heads*seq, seq].
template <typename Scalar>
Tensor<Scalar> multi_head_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                    const Tensor<Scalar>& v, Index batch, Index seq, int heads,
                                    AttentionMode mode, Tensor<Scalar>* save_probs = nullptr) {
  detail::require_same_shape(q, k, "attention");
  detail::require_same_shape(q, v, "attention");
  if (q.rank() != 2 || q.dim(0) != batch * seq) {
    throw DimensionError("attention: q must be [batch*seq, d]");
  }
  const Index d = q.dim(1);
  if (heads <= 0 || d % heads != 0) throw DimensionError("attention: d must divide by heads");
  const Index dh = d / heads;
  const Scalar att_scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));

  Tensor<Scalar> out(q.shape());
  Tensor<Scalar> probs(Shape{batch * heads * seq, seq});
  MatrixX<Scalar> scores(seq, seq);
  for (Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto qb = q.mat().block(b * seq, h * dh, seq, dh);
      const auto kb = k.mat().block(b * seq, h * dh, seq, dh);
      const auto vb = v.mat().block(b * seq, h * dh, seq, dh);
      scores.noalias() = qb * kb.transpose();
      scores *= att_scale;
      if (mode == AttentionMode::causal) {
        for (Index i = 0; i < seq; ++i) {
          for (Index j = i + 1; j < seq; ++j) scores(i, j) += static_cast<Scalar>(kAttentionMaskValue);
        }
      }
      auto pb = probs.mat().block((b * heads + h) * seq, 0, seq, seq);
      for (Index i = 0; i < seq; ++i) {
        const Scalar mx = scores.row(i).maxCoeff();
        double total = 0.0;
        for (Index j = 0; j < seq; ++j) {
          const double e = std::exp(static_cast<double>(scores(i, j) - mx));
          pb(i, j) = static_cast<Scalar>(e);
          total += e;
        }
        pb.row(i) *= static_cast<Scalar>(1.0 / total);
      }
      out.mat().block(b * seq, h * dh, seq, dh).noalias() = pb * vb;
    }
  }
  if (save_probs) *save_probs = std::move(probs);
  return out;
}

// Greedy per-row argmax; ties break toward the lowest id everywhere in the
// library (samplers and the chain oracle must agree on this).
template <typename Scalar>
std::int32_t argmax_row(const Scalar* row, Index v) {
  Index best = 0;
  for (Index j = 1; j < v; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<std::int32_t>(best);
}

// Single categorical draw from logits/temperature via inverse CDF over ids in
// ascending order. One uniform per call; the draw order is part of the
// determinism contract, tests replay it.
template <typename Scalar>
std::int32_t sample_categorical(const Scalar* logits, Index v, double temperature, Rng& rng) {
  if (temperature <= 0.0) return argmax_row(logits, v);
  double mx = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(logits[j]) / temperature);
  double total = 0.0;
  std::vector<double> e(static_cast<std::size_t>(v));
  for (Index j = 0; j < v; ++j) {
    e[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(logits[j]) / temperature - mx);
    total += e[static_cast<std::size_t>(j)];
  }
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (Index j = 0; j < v; ++j) {
    cum += e[static_cast<std::size_t>(j)];
    if (u < cum) return static_cast<std::int32_t>(j);
  }
  return static_cast<std::int32_t>(v - 1);
}

// ---------------------------------------------------------------------------
// Tape-recorded (differentiable) ops.
// ---------------------------------------------------------------------------

template <typename Scalar>
Var matmul(Tape<Scalar>& tp, Var a, Var b) {
  Tensor<Scalar> y = matmul(tp.value(a), tp.value(b));
  return tp.op(std::move(y), [a, b](Tape<Scalar>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    t.grad(a).mat().noalias() += g.mat(av.dim(0), bv.dim(1)) * bv.mat().transpose();
    t.grad(b).mat().noalias() += av.mat().transpose() * g.mat(av.dim(0), bv.dim(1));
  });
}

template <typename Scalar>
Var matmul_nt(Tape<Scalar>& tp, Var a, Var b) {
  Tensor<Scalar> y = matmul_nt(tp.value(a), tp.value(b));
  return tp.op(std::move(y), [a, b](Tape<Scalar>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    const auto gm = g.mat(av.dim(0), bv.dim(0));
    t.grad(a).mat().noalias() += gm * bv.mat();
    t.grad(b).mat().noalias() += gm.transpose() * av.mat();
  });
}

template <typename Scalar>
Var affine(Tape<Scalar>& tp, Var x, Var w, Var b) {
  Tensor<Scalar> y = affine(tp.value(x), tp.value(w), tp.value(b));
  return tp.op(std::move(y), [x, w, b](Tape<Scalar>& t, Var self) {
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    const auto gm = t.grad(self).mat(xv.dim(0), wv.dim(1));
    t.grad(x).mat().noalias() += gm * wv.mat().transpose();
    t.grad(w).mat().noalias() += xv.mat().transpose() * gm;
    t.grad(b).vec() += gm.colwise().sum().transpose();
  });
}

template <typename Scalar>
Var add(Tape<Scalar>& tp, Var a, Var b) {
  Tensor<Scalar> y = add(tp.value(a), tp.value(b));
  return tp.op(std::move(y), [a, b](Tape<Scalar>& t, Var self) {
    const auto& g = t.grad(self);
    t.grad(a).vec() += g.vec();
    t.grad(b).vec() += g.vec();
  });
}

template <typename Scalar>
Var scale(Tape<Scalar>& tp, Var a, Scalar c) {
  Tensor<Scalar> y = scale(tp.value(a), c);
  return tp.op(std::move(y), [a, c](Tape<Scalar>& t, Var self) {
    t.grad(a).vec() += t.grad(self).vec() * c;
  });
}

template <typename Scalar>
Var sum(Tape<Scalar>& tp, Var a) {
  Tensor<Scalar> y = sum(tp.value(a));
  return tp.op(std::move(y), [a](Tape<Scalar>& t, Var self) {
    t.grad(a).vec().array() += t.grad(self)[0];
  });
}

template <typename Scalar>
Var gelu(Tape<Scalar>& tp, Var x) {
  Tensor<Scalar> y = gelu(tp.value(x));
  return tp.op(std::move(y), [x](Tape<Scalar>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x);
    auto& gx = t.grad(x);
    for (Index i = 0; i < xv.size(); ++i) gx[i] += g[i] * gelu_derivative(xv[i]);
  });
}

template <typename Scalar>
Var softmax(Tape<Scalar>& tp, Var x, int axis = -1) {
  Tensor<Scalar> y = softmax(tp.value(x), axis);
  return tp.op(std::move(y), [x, axis](Tape<Scalar>& t, Var self) {
    const auto& y2 = t.value(self);
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    const int ax = detail::normalize_axis(axis, std::max(y2.rank(), 1));
    const Index len = y2.rank() == 0 ? 1 : y2.dim(ax);
    Index outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= y2.dim(i);
    for (int i = ax + 1; i < y2.rank(); ++i) inner *= y2.dim(i);
    for (Index o = 0; o < outer; ++o) {
      for (Index in = 0; in < inner; ++in) {
        const Index base = o * len * inner + in;
        double dot = 0.0;
        for (Index j = 0; j < len; ++j) {
          dot += static_cast<double>(g[base + j * inner]) * static_cast<double>(y2[base + j * inner]);
        }
        for (Index j = 0; j < len; ++j) {
          const Index at = base + j * inner;
          gx[at] += static_cast<Scalar>(static_cast<double>(y2[at]) *
                                        (static_cast<double>(g[at]) - dot));
        }
      }
    }
  });
}

template <typename Scalar>
Var layer_norm(Tape<Scalar>& tp, Var x, Var gamma, Var beta, Scalar eps) {
  Tensor<Scalar> y = layer_norm(tp.value(x), tp.value(gamma), tp.value(beta), eps);
  return tp.op(std::move(y), [x, gamma, beta, eps](Tape<Scalar>& t, Var self) {
    const auto& xv = t.value(x);
    const auto& gv = t.value(gamma);
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    auto& ggamma = t.grad(gamma);
    auto& gbeta = t.grad(beta);
    const Index d = gv.size();
    const Index rows = xv.size() / d;
    std::vector<double> xhat(static_cast<std::size_t>(d));
    for (Index r = 0; r < rows; ++r) {
      const Index base = r * d;
      double mean = 0.0;
      for (Index j = 0; j < d; ++j) mean += static_cast<double>(xv[base + j]);
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double c = static_cast<double>(xv[base + j]) - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (Index j = 0; j < d; ++j) {
        xhat[static_cast<std::size_t>(j)] = (static_cast<double>(xv[base + j]) - mean) * inv;
        const double dy = static_cast<double>(g[base + j]);
        ggamma[j] += static_cast<Scalar>(dy * xhat[static_cast<std::size_t>(j)]);
        gbeta[j] += static_cast<Scalar>(dy);
        const double dxhat = dy * static_cast<double>(gv[j]);
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat[static_cast<std::size_t>(j)];
      }
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      for (Index j = 0; j < d; ++j) {
        const double dxhat = static_cast<double>(g[base + j]) * static_cast<double>(gv[j]);
        gx[base + j] += static_cast<Scalar>(
            inv * (dxhat - mean_dxhat - xhat[static_cast<std::size_t>(j)] * mean_dxhat_xhat));
      }
    }
  });
}

template <typename Scalar>
Var gather_rows(Tape<Scalar>& tp, Var table, std::vector<std::int32_t> ids) {
  Tensor<Scalar> y = gather_rows(tp.value(table), std::span<const std::int32_t>(ids));
  return tp.op(std::move(y), [table, ids = std::move(ids)](Tape<Scalar>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad(table);
    const Index d = gt.dim(1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      gt.mat().row(ids[i]) += g.mat(static_cast<Index>(ids.size()), d).row(static_cast<Index>(i));
    }
  });
}

template <typename Scalar>
Var multi_head_attention(Tape<Scalar>& tp, Var q, Var k, Var v, Index batch, Index seq, int heads,
                         AttentionMode mode) {
  Tensor<Scalar> probs;
  Tensor<Scalar> y = multi_head_attention(tp.value(q), tp.value(k), tp.value(v), batch, seq, heads,
                                          mode, tp.grad_enabled() ? &probs : nullptr);
  return tp.op(std::move(y),
               [q, k, v, batch, seq, heads, probs = std::move(probs)](Tape<Scalar>& t, Var self) {
                 const auto& qv = t.value(q);
                 const auto& kv = t.value(k);
                 const auto& vv = t.value(v);
                 const Index d = qv.dim(1);
                 const Index dh = d / heads;
                 const Scalar att_scale =
                     static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
                 const auto& g = t.grad(self);
                 MatrixX<Scalar> dp(seq, seq), ds(seq, seq);
                 for (Index b = 0; b < batch; ++b) {
                   for (int h = 0; h < heads; ++h) {
                     const auto qb = qv.mat().block(b * seq, h * dh, seq, dh);
                     const auto kb = kv.mat().block(b * seq, h * dh, seq, dh);
                     const auto vb = vv.mat().block(b * seq, h * dh, seq, dh);
                     const auto pb = probs.mat().block((b * heads + h) * seq, 0, seq, seq);
                     const auto gb = g.mat(batch * seq, d).block(b * seq, h * dh, seq, dh);
                     dp.noalias() = gb * vb.transpose();
                     t.grad(v).mat().block(b * seq, h * dh, seq, dh).noalias() +=
                         pb.transpose() * gb;
                     // softmax backward per row: ds = p .* (dp - rowsum(dp .* p))
                     for (Index i = 0; i < seq; ++i) {
                       double dot = 0.0;
                       for (Index j = 0; j < seq; ++j) {
                         dot += static_cast<double>(dp(i, j)) * static_cast<double>(pb(i, j));
                       }
                       for (Index j = 0; j < seq; ++j) {
                         ds(i, j) = static_cast<Scalar>(
                             static_cast<double>(pb(i, j)) *
                             (static_cast<double>(dp(i, j)) - dot));
                       }
                     }
                     t.grad(q).mat().block(b * seq, h * dh, seq, dh).noalias() +=
                         ds * kb * att_scale;
                     t.grad(k).mat().block(b * seq, h * dh, seq, dh).noalias() +=
                         ds.transpose() * qb * att_scale;
                   }
                 }
               });
}

// Scalar loss node. Backward distributes (softmax - onehot) * g / masked_count
// over the masked rows; unmasked rows contribute nothing, by construction.
template <typename Scalar>
Var cross_entropy(Tape<Scalar>& tp, Var logits, std::vector<std::int32_t> targets,
                  std::vector<std::uint8_t> mask, CrossEntropyInfo* info_out = nullptr) {
  CrossEntropyInfo info = cross_entropy_value(tp.value(logits), std::span<const std::int32_t>(targets),
                                              std::span<const std::uint8_t>(mask));
  if (info_out) *info_out = info;
  Tensor<Scalar> y = Tensor<Scalar>::scalar(static_cast<Scalar>(info.value));
  const Index masked = std::max<Index>(info.masked_count, 1);
  return tp.op(std::move(y), [logits, targets = std::move(targets), mask = std::move(mask),
                              masked](Tape<Scalar>& t, Var self) {
    const double gscale = static_cast<double>(t.grad(self)[0]) / static_cast<double>(masked);
    const auto& lv = t.value(logits);
    auto& gl = t.grad(logits);
    const Index n = lv.dim(0), v = lv.dim(1);
    for (Index r = 0; r < n; ++r) {
      if (!mask[static_cast<std::size_t>(r)]) continue;
      const Index base = r * v;
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(lv[base + j]));
      double total = 0.0;
      for (Index j = 0; j < v; ++j) total += std::exp(static_cast<double>(lv[base + j]) - mx);
      const double inv = 1.0 / total;
      for (Index j = 0; j < v; ++j) {
        double p = std::exp(static_cast<double>(lv[base + j]) - mx) * inv;
        if (j == targets[static_cast<std::size_t>(r)]) p -= 1.0;
        gl[base + j] += static_cast<Scalar>(p * gscale);
      }
    }
  });
}

// Inverted dropout with a deterministic per-call mask. Identity at rate 0.
template <typename Scalar>
Var dropout(Tape<Scalar>& tp, Var x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  const auto& xv = tp.value(x);
  Tensor<Scalar> factor(xv.shape());
  Rng rng(seed);
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Index i = 0; i < factor.size(); ++i) {
    factor[i] = rng.uniform() < rate ? Scalar(0) : keep_scale;
  }
  Tensor<Scalar> y(xv.shape());
  y.vec() = xv.vec().cwiseProduct(factor.vec());
  return tp.op(std::move(y), [x, factor = std::move(factor)](Tape<Scalar>& t, Var self) {
    t.grad(x).vec() += t.grad(self).vec().cwiseProduct(factor.vec());
  });
}

}  // namespace nargen
