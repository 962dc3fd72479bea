#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lattle/layers.hpp"
#include "lattle/tabular.hpp"
#include "lattle/tokenizer.hpp"

namespace lattle {

// One feature slot of one sample, ready for embedding: token ids of the
// feature name (numeric) or name + value (categorical), and the scale factor
// (the normalized numeric value, or 1 for categoricals).
struct FeatSpec {
  double factor = 1.0;
  std::vector<int> ids;
};

struct GfttRow {
  std::vector<FeatSpec> feats;
  int label = 0;
};

struct GfttConfig {
  int n_layers = 5;
  int n_heads = 8;
  int d_model = 64;
  int ffn_hidden = 256;
  int vocab_size = 0;
  int n_classes = 2;
  int n_features = 0;
  double dropout = 0.1;

  void validate() const {
    if (n_layers < 1) throw ConfigError("gftt: need at least one layer");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("gftt: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " + std::to_string(n_heads));
    if (vocab_size <= Vocabulary::kCls) throw ConfigError("gftt: vocab_size not set");
    if (ffn_hidden < 1 || n_classes < 2 || n_features < 1)
      throw ConfigError("gftt: invalid geometry");
    if (dropout < 0 || dropout >= 1) throw ConfigError("gftt: dropout outside [0,1)");
  }
};

// Feature embedding: out[b,f,:] = factor * mean over the slot's token
// embeddings. E_num(name, v) = v * E_name exactly (bilinear in the value).
template <class S>
Tensor<S> feature_embed(const Tensor<S>& tok_emb,
                        const std::vector<const GfttRow*>& batch, int n_features) {
  if (tok_emb.rank() != 2) throw ShapeError("feature_embed: table must be [V, d]");
  const int V = tok_emb.dim(0);
  const int d = tok_emb.dim(1);
  const int B = static_cast<int>(batch.size());
  auto spec = std::make_shared<std::vector<FeatSpec>>();  // flattened B x F
  spec->reserve(static_cast<std::size_t>(B) * n_features);
  for (const GfttRow* row : batch) {
    if (static_cast<int>(row->feats.size()) != n_features)
      throw DataError("feature_embed: row has " + std::to_string(row->feats.size()) +
                      " features, model expects " + std::to_string(n_features));
    for (const FeatSpec& f : row->feats) {
      if (f.ids.empty()) throw DataError("feature_embed: feature with no tokens");
      for (int id : f.ids)
        if (id < 0 || id >= V)
          throw IndexError("feature_embed: token id " + std::to_string(id) +
                           " out of range [0, " + std::to_string(V) + ")");
      spec->push_back(f);
    }
  }

  Tensor<S> out = Tensor<S>::zeros({B, n_features, d});
  const S* pe = tok_emb.data();
  S* po = out.data();
  for (std::size_t s = 0; s < spec->size(); ++s) {
    const FeatSpec& f = (*spec)[s];
    S* dst = po + s * d;
    for (int id : f.ids) {
      const S* src = pe + (std::size_t)id * d;
      for (int c = 0; c < d; ++c) dst[c] += src[c];
    }
    const S inv = S(1) / S(f.ids.size());
    const S factor = static_cast<S>(f.factor);
    for (int c = 0; c < d; ++c) dst[c] = factor * (dst[c] * inv);
  }

  out.set_parents({tok_emb});
  if (!out.requires_grad()) return out;
  auto* on = out.node();
  auto* tn = tok_emb.node();
  out.set_backward([on, tn, spec, d] {
    tn->ensure_grad();
    for (std::size_t s = 0; s < spec->size(); ++s) {
      const FeatSpec& f = (*spec)[s];
      const S w = static_cast<S>(f.factor) / S(f.ids.size());
      const S* src = on->grad.data() + s * d;
      for (int id : f.ids) {
        S* dst = tn->grad.data() + (std::size_t)id * d;
        for (int c = 0; c < d; ++c) dst[c] += w * src[c];
      }
    }
  });
  return out;
}

// Gated Feature Tokenizer Transformer: CLS + per-feature embeddings through
// gated non-causal layers; classification reads position 0 only. Feature
// tokens carry no positional encoding — identity lives in the name embedding.
template <class S>
struct Gftt {
  GfttConfig cfg;
  Tensor<S> tok_emb;
  Tensor<S> cls_emb;
  std::vector<AttnLayer<S>> layers;
  Tensor<S> clf_w, clf_b;

  static Gftt init(const GfttConfig& cfg, Rng& rng) {
    cfg.validate();
    Gftt m;
    m.cfg = cfg;
    auto mat = [&](std::vector<int> shape) {
      Tensor<S> t = Tensor<S>::zeros(shape, true);
      for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<S>(rng.normal(0.0, 0.02));
      return t;
    };
    m.tok_emb = mat({cfg.vocab_size, cfg.d_model});
    m.cls_emb = mat({cfg.d_model});
    m.layers.resize(cfg.n_layers);
    for (auto& l : m.layers)
      l.init(rng, cfg.d_model, cfg.ffn_hidden, cfg.n_heads, /*causal=*/false, /*gate=*/true,
             Activation::Relu);
    m.clf_w = mat({cfg.d_model, cfg.n_classes});
    m.clf_b = Tensor<S>::zeros({cfg.n_classes}, true);
    auto named = m.named_params();
    stamp_param_names(named);
    return m;
  }

  // [B, F+1, d] with CLS at position 0.
  Tensor<S> embed_batch(const std::vector<const GfttRow*>& batch) const {
    return prepend_row(cls_emb, feature_embed(tok_emb, batch, cfg.n_features));
  }

  Tensor<S> forward_classify(const std::vector<const GfttRow*>& batch, Rng& rng, bool training,
                             std::vector<std::vector<S>>* alpha_traces = nullptr) const {
    Tensor<S> z = embed_batch(batch);
    for (const auto& l : layers) {
      std::vector<S> trace;
      z = l.forward(z, cfg.dropout, rng, training, {}, alpha_traces ? &trace : nullptr);
      if (alpha_traces) alpha_traces->push_back(std::move(trace));
    }
    return linear(select_time(z, 0), clf_w, clf_b);
  }

  std::vector<std::pair<std::string, Tensor<S>>> named_params() const {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    out.emplace_back("tok_emb", tok_emb);
    out.emplace_back("cls_emb", cls_emb);
    for (int i = 0; i < cfg.n_layers; ++i)
      layers[i].named_params("layer" + std::to_string(i) + ".", out);
    out.emplace_back("clf.w", clf_w);
    out.emplace_back("clf.b", clf_b);
    return out;
  }

  std::vector<Tensor<S>> params() const {
    std::vector<Tensor<S>> out;
    for (auto& [n, t] : named_params()) out.push_back(t);
    return out;
  }
};

// Tokenizes a normalized dataset for the gFTT after checking it against the
// schema the model was built for; mismatches name the offending column.
std::vector<GfttRow> prepare_gftt_rows(const TabularDataset& normalized, const Vocabulary& v,
                                       const Schema& expected);

}  // namespace lattle
