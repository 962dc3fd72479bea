#pragma once

#include <string>
#include <vector>

#include "lattle/ops.hpp"
#include "lattle/optim.hpp"
#include "lattle/rng.hpp"

namespace lattle {

enum class Activation { Relu, Gelu };

// One post-norm transformer layer, shared between the causal mini-LM
// (ungated, GELU) and the gFTT (gated, non-causal, ReLU):
//   u = W_o(MultiHeadAttention(x)) ;  u = dropout(u)
//   if gated: u = sigmoid(x W_g + b_g) (*) u
//   y = LayerNorm(x + u)
//   out = LayerNorm(y + dropout(FFN(y)))
template <class S>
struct AttnLayer {
  Tensor<S> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Tensor<S> w_g, b_g;  // gate, defined only when gated
  Tensor<S> w1, b1, w2, b2;
  Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
  int heads = 1;
  bool causal = false;
  bool gated = false;
  Activation act = Activation::Gelu;

  void init(Rng& rng, int d, int ffn_hidden, int n_heads, bool causal_attn, bool use_gate,
            Activation activation) {
    if (d < 1 || ffn_hidden < 1 || n_heads < 1 || d % n_heads != 0)
      throw ConfigError("layer: d_model " + std::to_string(d) +
                        " incompatible with heads/ffn config");
    heads = n_heads;
    causal = causal_attn;
    gated = use_gate;
    act = activation;
    auto mat = [&](int rows, int cols) {
      Tensor<S> t = Tensor<S>::zeros({rows, cols}, true);
      for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<S>(rng.normal(0.0, 0.02));
      return t;
    };
    auto vec = [&](int n, S value) { return Tensor<S>::full({n}, value, true); };
    w_q = mat(d, d);  b_q = vec(d, S(0));
    w_k = mat(d, d);  b_k = vec(d, S(0));
    w_v = mat(d, d);  b_v = vec(d, S(0));
    w_o = mat(d, d);  b_o = vec(d, S(0));
    if (gated) {
      w_g = mat(d, d);
      b_g = vec(d, S(0));
    }
    w1 = mat(d, ffn_hidden);  b1 = vec(ffn_hidden, S(0));
    w2 = mat(ffn_hidden, d);  b2 = vec(d, S(0));
    ln1_g = vec(d, S(1));  ln1_b = vec(d, S(0));
    ln2_g = vec(d, S(1));  ln2_b = vec(d, S(0));
  }

  Tensor<S> forward(const Tensor<S>& x, double dropout_p, Rng& rng, bool training,
                    const std::vector<int>& key_len = {},
                    std::vector<S>* alpha_trace = nullptr) const {
    Tensor<S> u = attention(linear(x, w_q, b_q), linear(x, w_k, b_k), linear(x, w_v, b_v),
                            heads, causal, key_len, alpha_trace);
    u = linear(u, w_o, b_o);
    u = dropout(u, dropout_p, rng, training);
    if (gated) u = mul(sigmoid(linear(x, w_g, b_g)), u);
    Tensor<S> y = layer_norm(add(x, u), ln1_g, ln1_b);
    Tensor<S> h = linear(y, w1, b1);
    h = act == Activation::Relu ? relu(h) : gelu(h);
    Tensor<S> f = dropout(linear(h, w2, b2), dropout_p, rng, training);
    return layer_norm(add(y, f), ln2_g, ln2_b);
  }

  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor<S>>>& out) const {
    auto put = [&](const char* n, const Tensor<S>& t) { out.emplace_back(prefix + n, t); };
    put("w_q", w_q);  put("b_q", b_q);
    put("w_k", w_k);  put("b_k", b_k);
    put("w_v", w_v);  put("b_v", b_v);
    put("w_o", w_o);  put("b_o", b_o);
    if (gated) {
      put("w_g", w_g);
      put("b_g", b_g);
    }
    put("w1", w1);  put("b1", b1);
    put("w2", w2);  put("b2", b2);
    put("ln1_g", ln1_g);  put("ln1_b", ln1_b);
    put("ln2_g", ln2_g);  put("ln2_b", ln2_b);
  }
};

// Stamps each tensor with its registry name; called once after model init so
// optimizer errors, freeze masks and checkpoints all agree on naming.
template <class S>
void stamp_param_names(std::vector<std::pair<std::string, Tensor<S>>>& named) {
  for (auto& [name, t] : named) t.set_name(name);
}

}  // namespace lattle
