#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lattle/layers.hpp"
#include "lattle/tokenizer.hpp"

namespace lattle {

struct LmConfig {
  int n_layers = 6;
  int n_heads = 4;
  int d_model = 64;
  int ffn_hidden = 256;
  int max_len = 1024;
  int vocab_size = 0;  // set from the vocabulary
  int n_classes = 2;
  int head_layers = 1;  // gFTT-head depth on top of the projection
  int head_heads = 8;
  double dropout = 0.1;

  void validate() const {
    if (n_layers < 1 || head_layers < 1) throw ConfigError("lm: need at least one layer");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("lm: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    if (d_model % head_heads != 0)
      throw ConfigError("lm: d_model not divisible by head_heads");
    if (vocab_size <= Vocabulary::kCls) throw ConfigError("lm: vocab_size not set");
    if (max_len < 1 || ffn_hidden < 1 || n_classes < 2)
      throw ConfigError("lm: invalid geometry");
    if (dropout < 0 || dropout >= 1) throw ConfigError("lm: dropout outside [0,1)");
  }
};

// Decoder-only transformer with a projection layer, a gated non-causal
// (gFTT-style) head and a CLS-read classifier, fine-tuned on serialized rows.
template <class S>
struct MiniLm {
  LmConfig cfg;
  Tensor<S> tok_emb, pos_emb;
  std::vector<AttnLayer<S>> layers;  // causal, GELU FFN
  Tensor<S> proj_w, proj_b;          // d_llm -> d_gftt (equal geometry)
  Tensor<S> cls_emb;
  std::vector<AttnLayer<S>> head;    // gated, non-causal, ReLU FFN
  Tensor<S> clf_w, clf_b;

  static MiniLm init(const LmConfig& cfg, Rng& rng) {
    cfg.validate();
    MiniLm m;
    m.cfg = cfg;
    auto mat = [&](std::vector<int> shape) {
      Tensor<S> t = Tensor<S>::zeros(shape, true);
      for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<S>(rng.normal(0.0, 0.02));
      return t;
    };
    m.tok_emb = mat({cfg.vocab_size, cfg.d_model});
    m.pos_emb = mat({cfg.max_len, cfg.d_model});
    m.layers.resize(cfg.n_layers);
    for (auto& l : m.layers)
      l.init(rng, cfg.d_model, cfg.ffn_hidden, cfg.n_heads, /*causal=*/true, /*gate=*/false,
             Activation::Gelu);
    m.proj_w = mat({cfg.d_model, cfg.d_model});
    m.proj_b = Tensor<S>::zeros({cfg.d_model}, true);
    m.cls_emb = mat({cfg.d_model});
    m.head.resize(cfg.head_layers);
    for (auto& l : m.head)
      l.init(rng, cfg.d_model, cfg.ffn_hidden, cfg.head_heads, /*causal=*/false, /*gate=*/true,
             Activation::Relu);
    m.clf_w = mat({cfg.d_model, cfg.n_classes});
    m.clf_b = Tensor<S>::zeros({cfg.n_classes}, true);
    auto named = m.named_params();
    stamp_param_names(named);
    return m;
  }

  // Causal decoder states [B, T, d]; padding must be a suffix per sample.
  Tensor<S> forward_hidden(const std::vector<int>& ids, int B, int T,
                           const std::vector<int>& key_len, Rng& rng, bool training) const {
    if (T > cfg.max_len)
      throw ConfigError("lm: sequence length " + std::to_string(T) + " exceeds max_len " +
                        std::to_string(cfg.max_len));
    Tensor<S> x = embedding(tok_emb, ids, B, T);
    x = add_positions(x, pos_emb);
    x = dropout(x, cfg.dropout, rng, training);
    for (const auto& l : layers) x = l.forward(x, cfg.dropout, rng, training, key_len);
    return x;
  }

  Tensor<S> forward_classify(const std::vector<int>& ids, int B, int T,
                             const std::vector<int>& key_len, Rng& rng, bool training) const {
    Tensor<S> h = forward_hidden(ids, B, T, key_len, rng, training);
    Tensor<S> p = linear(h, proj_w, proj_b);
    Tensor<S> z = prepend_row(cls_emb, p);
    std::vector<int> head_len;  // CLS occupies position 0, rows shift by one
    for (int kl : key_len) head_len.push_back(kl + 1);
    for (const auto& l : head) z = l.forward(z, cfg.dropout, rng, training, head_len);
    return linear(select_time(z, 0), clf_w, clf_b);
  }

  std::vector<std::pair<std::string, Tensor<S>>> named_params() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("pos_emb", pos_emb);
    for (int i = 0; i < cfg.n_layers; ++i)
      layers[i].named_params("layer" + std::to_string(i) + ".", out);
    out.emplace_back("proj.w", proj_w);
    out.emplace_back("proj.b", proj_b);
    out.emplace_back("cls_emb", cls_emb);
    for (int i = 0; i < cfg.head_layers; ++i)
      head[i].named_params("head" + std::to_string(i) + ".", out);
    out.emplace_back("clf.w", clf_w);
    out.emplace_back("clf.b", clf_b);
    return out;
  }

  std::vector<Tensor<S>> params() const {
    std::vector<Tensor<S>> out;
    for (auto& [n, t] : named_params()) out.push_back(t);
    return out;
  }

  // Partial fine-tuning trains only the uppermost decoder layer, projection,
  // CLS, head and classifier; embeddings and lower layers stay fixed and the
  // graph prunes their gradients entirely.
  void set_trainable_scope(bool full_finetune) {
    for (auto& [name, t] : named_params()) t.set_requires_grad(true);
    if (full_finetune) return;
    std::vector<std::pair<std::string, Tensor<S>>> lower;
    lower.emplace_back("tok_emb", tok_emb);
    lower.emplace_back("pos_emb", pos_emb);
    for (int i = 0; i + 1 < cfg.n_layers; ++i)
      layers[i].named_params("layer" + std::to_string(i) + ".", lower);
    for (auto& [name, t] : lower) t.set_requires_grad(false);
  }

  std::vector<Tensor<S>> trainable_params(bool full_finetune) const {
    if (full_finetune) return params();
    std::vector<std::pair<std::string, Tensor<S>>> upper;
    layers[cfg.n_layers - 1].named_params("layer" + std::to_string(cfg.n_layers - 1) + ".",
                                          upper);
    upper.emplace_back("proj.w", proj_w);
    upper.emplace_back("proj.b", proj_b);
    upper.emplace_back("cls_emb", cls_emb);
    for (int i = 0; i < cfg.head_layers; ++i)
      head[i].named_params("head" + std::to_string(i) + ".", upper);
    upper.emplace_back("clf.w", clf_w);
    upper.emplace_back("clf.b", clf_b);
    std::vector<Tensor<S>> out;
    for (auto& [n, t] : upper) out.push_back(t);
    return out;
  }
};

template <class S>
struct ExtractedAttention {
  int source_layer = -1;
  Tensor<S> w_q, b_q, w_k, b_k, w_v, b_v;  // deep copies
};

// Deep-copies Q/K/V projection weights (with biases) of the given layers,
// uppermost layer = index n_layers-1. Later LM training leaves copies intact.
template <class S>
std::vector<ExtractedAttention<S>> extract_attention(const MiniLm<S>& lm,
                                                     const std::vector<int>& layer_indices) {
  std::vector<ExtractedAttention<S>> out;
  for (int idx : layer_indices) {
    if (idx < 0 || idx >= lm.cfg.n_layers)
      throw IndexError("extract_attention: layer " + std::to_string(idx) +
                       " out of range [0, " + std::to_string(lm.cfg.n_layers) + ")");
    const AttnLayer<S>& l = lm.layers[idx];
    ExtractedAttention<S> e;
    e.source_layer = idx;
    auto copy = [](const Tensor<S>& t) {
      return Tensor<S>::from_data(t.shape(), t.data_vec());
    };
    e.w_q = copy(l.w_q);  e.b_q = copy(l.b_q);
    e.w_k = copy(l.w_k);  e.b_k = copy(l.b_k);
    e.w_v = copy(l.w_v);  e.b_v = copy(l.b_v);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace lattle
