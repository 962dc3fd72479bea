#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "lattle/kernels.hpp"
#include "lattle/rng.hpp"
#include "lattle/tensor.hpp"

// Differentiable ops. Forward computes through lattle::kern, backward is a
// closure stored on the output node that accumulates into parent grads.

namespace lattle {

namespace detail {

template <class S>
void accum(TensorNode<S>* p, const S* src, std::size_t n) {
  p->ensure_grad();
  S* g = p->grad.data();
  for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
}

}  // namespace detail

// a: [..., m, k] (leading dims flattened), b: [k, n].
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.dim(a.rank() - 1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int k = b.dim(0);
  const int n = b.dim(1);
  const int rows = static_cast<int>(a.numel()) / k;

  std::vector<int> out_shape = a.shape();
  out_shape.back() = n;
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  kern::matmul(a.data(), b.data(), out.data(), rows, k, n, false);

  out.set_parents({a, b});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* an = a.node();
  auto* bn = b.node();
  out.set_backward([on, an, bn, rows, k, n] {
    if (an->requires_grad) {
      an->ensure_grad();
      kern::matmul_transb(on->grad.data(), bn->data.data(), an->grad.data(), rows, n, k, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      kern::matmul_transa_acc(an->data.data(), on->grad.data(), bn->grad.data(), rows, k, n);
    }
  });
  return out;
}

// x: [..., din], w: [din, dout], bias optional.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  if (x.rank() < 2 || w.rank() != 2 || x.dim(x.rank() - 1) != w.dim(0))
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                     shape_str(w.shape()));
  const int din = w.dim(0);
  const int dout = w.dim(1);
  const int rows = static_cast<int>(x.numel()) / din;
  if (bias.defined() && static_cast<int>(bias.numel()) != dout)
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " vs dout " +
                     std::to_string(dout));

  std::vector<int> out_shape = x.shape();
  out_shape.back() = dout;
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  kern::matmul(x.data(), w.data(), out.data(), rows, din, dout, false);
  if (bias.defined()) kern::add_row_bias(out.data(), bias.data(), rows, dout);

  if (bias.defined())
    out.set_parents({x, w, bias});
  else
    out.set_parents({x, w});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  auto* wn = w.node();
  auto* bn = bias.defined() ? bias.node() : nullptr;
  out.set_backward([on, xn, wn, bn, rows, din, dout] {
    if (xn->requires_grad) {
      xn->ensure_grad();
      kern::matmul_transb(on->grad.data(), wn->data.data(), xn->grad.data(), rows, dout, din,
                          true);
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      kern::matmul_transa_acc(xn->data.data(), on->grad.data(), wn->grad.data(), rows, din,
                              dout);
    }
    if (bn && bn->requires_grad) {
      bn->ensure_grad();
      kern::col_sums_acc(on->grad.data(), bn->grad.data(), rows, dout);
    }
  });
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = out.numel();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  out.set_parents({a, b});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* an = a.node();
  auto* bn = b.node();
  out.set_backward([on, an, bn, n] {
    if (an->requires_grad) detail::accum(an, on->grad.data(), n);
    if (bn->requires_grad) detail::accum(bn, on->grad.data(), n);
  });
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = out.numel();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  out.set_parents({a, b});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* an = a.node();
  auto* bn = b.node();
  out.set_backward([on, an, bn, n] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i] * an->data[i];
    }
  });
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  out.set_parents({a});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* an = a.node();
  out.set_backward([on, an, c, n] {
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i] * c;
  });
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  kern::relu(x.data(), out.data(), x.numel());
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  const std::size_t n = x.numel();
  out.set_backward([on, xn, n] {
    xn->ensure_grad();
    kern::relu_backward(xn->data.data(), on->grad.data(), xn->grad.data(), n);
  });
  return out;
}

template <class S>
Tensor<S> gelu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  kern::gelu(x.data(), out.data(), x.numel());
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  const std::size_t n = x.numel();
  out.set_backward([on, xn, n] {
    xn->ensure_grad();
    kern::gelu_backward(xn->data.data(), on->grad.data(), xn->grad.data(), n);
  });
  return out;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  kern::sigmoid(x.data(), out.data(), x.numel());
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  const std::size_t n = x.numel();
  out.set_backward([on, xn, n] {
    xn->ensure_grad();
    kern::sigmoid_backward(on->data.data(), on->grad.data(), xn->grad.data(), n);
  });
  return out;
}

template <class S>
Tensor<S> softmax_last_dim(const Tensor<S>& x) {
  if (x.rank() < 1) throw ShapeError("softmax: rank-0 input");
  const int n = x.dim(x.rank() - 1);
  const int rows = static_cast<int>(x.numel()) / n;
  const S* px = x.data();
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (!std::isfinite(px[i])) throw NumericError("softmax: non-finite input");
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  kern::softmax_rows(x.data(), out.data(), rows, n);
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  out.set_backward([on, xn, rows, n] {
    xn->ensure_grad();
    kern::softmax_rows_backward(on->data.data(), on->grad.data(), xn->grad.data(), rows, n);
  });
  return out;
}

template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5)) {
  const int n = x.dim(x.rank() - 1);
  if (static_cast<int>(gamma.numel()) != n || static_cast<int>(beta.numel()) != n)
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(n) + " entries");
  if (!(eps > S(0))) throw ConfigError("layer_norm: eps must be positive");
  const int rows = static_cast<int>(x.numel()) / n;

  Tensor<S> out = Tensor<S>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<S>>(rows);
  auto rstd = std::make_shared<std::vector<S>>(rows);
  kern::layernorm_rows(x.data(), gamma.data(), beta.data(), eps, out.data(), mean->data(),
                       rstd->data(), rows, n);
  out.set_parents({x, gamma, beta});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  auto* gn = gamma.node();
  auto* bn = beta.node();
  out.set_backward([on, xn, gn, bn, mean, rstd, rows, n] {
    if (xn->requires_grad) {
      xn->ensure_grad();
      kern::layernorm_rows_backward_dx(xn->data.data(), gn->data.data(), mean->data(),
                                       rstd->data(), on->grad.data(), xn->grad.data(), rows, n);
    }
    if (gn->requires_grad || bn->requires_grad) {
      gn->ensure_grad();
      bn->ensure_grad();
      kern::layernorm_rows_backward_params(xn->data.data(), mean->data(), rstd->data(),
                                           on->grad.data(), gn->grad.data(), bn->grad.data(),
                                           rows, n);
    }
  });
  return out;
}

// Mean over the batch of -log softmax(logits)[label].
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B, C]");
  const int B = logits.dim(0);
  const int C = logits.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(B));
  for (int i = 0; i < B; ++i)
    if (labels[i] < 0 || labels[i] >= C)
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range [0, " + std::to_string(C) + ")");

  auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B) * C);
  kern::softmax_rows(logits.data(), probs->data(), B, C);
  S loss = S(0);
  const S* pl = logits.data();
  for (int i = 0; i < B; ++i) {
    const S* row = pl + (std::size_t)i * C;
    S m = row[0];
    for (int c = 1; c < C; ++c) m = row[c] > m ? row[c] : m;
    S lse = S(0);
    for (int c = 0; c < C; ++c) lse += std::exp(row[c] - m);
    loss += m + std::log(lse) - row[labels[i]];
  }
  loss /= S(B);

  Tensor<S> out = Tensor<S>::scalar(loss);
  out.set_parents({logits});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* ln = logits.node();
  auto labels_copy = labels;
  out.set_backward([on, ln, probs, labels_copy, B, C] {
    ln->ensure_grad();
    const S g = on->grad[0] / S(B);
    for (int i = 0; i < B; ++i) {
      S* gr = ln->grad.data() + (std::size_t)i * C;
      const S* pr = probs->data() + (std::size_t)i * C;
      for (int c = 0; c < C; ++c) gr[c] += g * pr[c];
      gr[labels_copy[i]] -= g;
    }
  });
  return out;
}

// table: [V, d], ids in row-major [B, T] order.
template <class S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<int>& ids, int B, int T) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V, d]");
  const int V = table.dim(0);
  const int d = table.dim(1);
  if (static_cast<int>(ids.size()) != B * T)
    throw ShapeError("embedding: id count mismatch");
  for (int id : ids)
    if (id < 0 || id >= V)
      throw IndexError("embedding: token id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(V) + ")");
  Tensor<S> out = Tensor<S>::zeros({B, T, d});
  const S* pt = table.data();
  S* po = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(pt + (std::size_t)ids[i] * d, d, po + i * d);
  out.set_parents({table});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* tn = table.node();
  auto ids_copy = ids;
  out.set_backward([on, tn, ids_copy, d] {
    tn->ensure_grad();
    for (std::size_t i = 0; i < ids_copy.size(); ++i) {
      S* dst = tn->grad.data() + (std::size_t)ids_copy[i] * d;
      const S* src = on->grad.data() + i * d;
      for (int c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
  return out;
}

// x: [B, T, d] plus the first T rows of pos: [L, d].
template <class S>
Tensor<S> add_positions(const Tensor<S>& x, const Tensor<S>& pos) {
  if (x.rank() != 3 || pos.rank() != 2 || x.dim(2) != pos.dim(1) || x.dim(1) > pos.dim(0))
    throw ShapeError("add_positions: " + shape_str(x.shape()) + " vs table " +
                     shape_str(pos.shape()));
  const int B = x.dim(0), T = x.dim(1), d = x.dim(2);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  const S* px = x.data();
  const S* pp = pos.data();
  S* po = out.data();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < T; ++t) {
      const std::size_t o = ((std::size_t)b * T + t) * d;
      for (int c = 0; c < d; ++c) po[o + c] = px[o + c] + pp[(std::size_t)t * d + c];
    }
  out.set_parents({x, pos});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  auto* pn = pos.node();
  out.set_backward([on, xn, pn, B, T, d] {
    if (xn->requires_grad) detail::accum(xn, on->grad.data(), (std::size_t)B * T * d);
    if (pn->requires_grad) {
      pn->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
          const S* src = on->grad.data() + ((std::size_t)b * T + t) * d;
          S* dst = pn->grad.data() + (std::size_t)t * d;
          for (int c = 0; c < d; ++c) dst[c] += src[c];
        }
    }
  });
  return out;
}

// Multi-head scaled dot-product attention over projected q/k/v, [B, T, D].
// key_len, when nonempty, limits attendable keys per sample (padding mask).
// alpha_trace, when given, receives a copy of the [B, H, T, T] probabilities.
template <class S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, int heads,
                    bool causal, const std::vector<int>& key_len = {},
                    std::vector<S>* alpha_trace = nullptr) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape())
    throw ShapeError("attention: q/k/v must share shape [B, T, D]");
  const int B = q.dim(0), T = q.dim(1), D = q.dim(2);
  if (heads < 1 || D % heads != 0)
    throw ConfigError("attention: d_model " + std::to_string(D) +
                      " not divisible by head count " + std::to_string(heads));
  if (!key_len.empty() && static_cast<int>(key_len.size()) != B)
    throw ShapeError("attention: key_len size mismatch");

  Tensor<S> out = Tensor<S>::zeros(q.shape());
  auto alpha = std::make_shared<std::vector<S>>((std::size_t)B * heads * T * T);
  const int* kl = key_len.empty() ? nullptr : key_len.data();
  kern::attention_forward(q.data(), k.data(), v.data(), out.data(), alpha->data(), B, T, D,
                          heads, causal, kl);
  if (alpha_trace) *alpha_trace = *alpha;

  out.set_parents({q, k, v});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* qn = q.node();
  auto* kn = k.node();
  auto* vn = v.node();
  auto key_len_copy = key_len;
  out.set_backward([on, qn, kn, vn, alpha, key_len_copy, B, T, D, heads, causal] {
    qn->ensure_grad();
    kn->ensure_grad();
    vn->ensure_grad();
    const int* kl2 = key_len_copy.empty() ? nullptr : key_len_copy.data();
    kern::attention_backward(on->grad.data(), qn->data.data(), kn->data.data(),
                             vn->data.data(), alpha->data(), qn->grad.data(), kn->grad.data(),
                             vn->grad.data(), B, T, D, heads, causal, kl2);
  });
  return out;
}

// out[b, 0, :] = first, out[b, t+1, :] = x[b, t, :].
template <class S>
Tensor<S> prepend_row(const Tensor<S>& first, const Tensor<S>& x) {
  if (x.rank() != 3 || first.rank() != 1 || first.dim(0) != x.dim(2))
    throw ShapeError("prepend_row: " + shape_str(first.shape()) + " vs " +
                     shape_str(x.shape()));
  const int B = x.dim(0), T = x.dim(1), d = x.dim(2);
  Tensor<S> out = Tensor<S>::zeros({B, T + 1, d});
  S* po = out.data();
  const S* pf = first.data();
  const S* px = x.data();
  for (int b = 0; b < B; ++b) {
    std::copy_n(pf, d, po + (std::size_t)b * (T + 1) * d);
    std::copy_n(px + (std::size_t)b * T * d, (std::size_t)T * d,
                po + (std::size_t)b * (T + 1) * d + d);
  }
  out.set_parents({first, x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* fn = first.node();
  auto* xn = x.node();
  out.set_backward([on, fn, xn, B, T, d] {
    if (fn->requires_grad) {
      fn->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const S* src = on->grad.data() + (std::size_t)b * (T + 1) * d;
        for (int c = 0; c < d; ++c) fn->grad[c] += src[c];
      }
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (int b = 0; b < B; ++b) {
        const S* src = on->grad.data() + (std::size_t)b * (T + 1) * d + d;
        S* dst = xn->grad.data() + (std::size_t)b * T * d;
        for (std::size_t i = 0; i < (std::size_t)T * d; ++i) dst[i] += src[i];
      }
    }
  });
  return out;
}

// x[:, t, :] -> [B, d]
template <class S>
Tensor<S> select_time(const Tensor<S>& x, int t) {
  if (x.rank() != 3 || t < 0 || t >= x.dim(1))
    throw ShapeError("select_time: position " + std::to_string(t) + " in " +
                     shape_str(x.shape()));
  const int B = x.dim(0), T = x.dim(1), d = x.dim(2);
  Tensor<S> out = Tensor<S>::zeros({B, d});
  for (int b = 0; b < B; ++b)
    std::copy_n(x.data() + ((std::size_t)b * T + t) * d, d, out.data() + (std::size_t)b * d);
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  out.set_backward([on, xn, B, T, d, t] {
    xn->ensure_grad();
    for (int b = 0; b < B; ++b) {
      const S* src = on->grad.data() + (std::size_t)b * d;
      S* dst = xn->grad.data() + ((std::size_t)b * T + t) * d;
      for (int c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
  return out;
}

// Inverted dropout; identity when not training or p == 0.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const std::size_t n = x.numel();
  auto mask = std::make_shared<std::vector<S>>(n);
  const S keep_scale = S(1.0 / (1.0 - p));
  // One generator draw seeds a splitmix64 counter stream for the whole mask;
  // the branch-free per-element mix is ~10x cheaper than a generator call.
  const std::uint64_t base = rng.next_u64();
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
    (*mask)[i] = u >= p ? keep_scale : S(0);
  }
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * (*mask)[i];
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  out.set_backward([on, xn, mask, n] {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * (*mask)[i];
  });
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = S(0);
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) acc += x.data()[i];
  Tensor<S> out = Tensor<S>::scalar(acc);
  out.set_parents({x});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* xn = x.node();
  out.set_backward([on, xn, n] {
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[0];
  });
  return out;
}

template <class S>
Tensor<S> mean(const Tensor<S>& x) {
  return scale(sum(x), S(1) / S(x.numel()));
}

}  // namespace lattle
