#include "lattle/transplant.hpp"

#include <algorithm>
#include <set>

#include "lattle/log.hpp"

namespace lattle {

std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> strategy_names() {
  return {"proposed", "top-to-two", "toptwo-to-two", "none"};
}

TransplantStrategy strategy_from_name(const std::string& name, int lm_layers,
                                      int gftt_layers) {
  TransplantStrategy s;
  s.name = name;
  const int top = lm_layers - 1;
  if (name == "proposed") {
    s.mapping = {{top, 0}};
  } else if (name == "top-to-two") {
    s.mapping = {{top, 0}, {top, 1}};
  } else if (name == "toptwo-to-two") {
    if (lm_layers < 2)
      throw ConfigError("strategy toptwo-to-two needs an LM with >= 2 layers");
    s.mapping = {{top, 0}, {top - 1, 1}};
  } else if (name == "none") {
    s.mapping = {};
  } else {
    std::string msg = "unknown transplant strategy '" + name + "'; expected one of";
    for (const auto& n : strategy_names()) msg += " " + n;
    throw ConfigError(msg);
  }
  for (auto [src, tgt] : s.mapping) {
    if (src < 0 || src >= lm_layers)
      throw ConfigError("strategy " + name + ": LM layer " + std::to_string(src) +
                        " out of range [0, " + std::to_string(lm_layers) + ")");
    if (tgt < 0 || tgt >= gftt_layers)
      throw ConfigError("strategy " + name + ": gFTT layer " + std::to_string(tgt) +
                        " out of range [0, " + std::to_string(gftt_layers) + ")");
  }
  return s;
}

void head_count_compat(int lm_heads, int gftt_heads) {
  if (lm_heads != gftt_heads)
    log_info(
        "transplant: LM uses %d heads, gFTT uses %d; combined d x d matrices move as-is "
        "and per-head slices are reinterpreted",
        lm_heads, gftt_heads);
}

template <class S>
std::vector<std::string> apply_transplant(const MiniLm<S>& lm, Gftt<S>& model,
                                          const TransplantStrategy& strategy) {
  if (lm.cfg.d_model != model.cfg.d_model)
    throw DataError("transplant: d_model mismatch: LM " + std::to_string(lm.cfg.d_model) +
                    " vs gFTT " + std::to_string(model.cfg.d_model) +
                    " (no padding or truncation permitted)");
  std::set<int> seen_targets;
  for (auto [src, tgt] : strategy.mapping) {
    if (src < 0 || src >= lm.cfg.n_layers)
      throw ConfigError("transplant: LM layer " + std::to_string(src) + " out of range");
    if (tgt < 0 || tgt >= model.cfg.n_layers)
      throw ConfigError("transplant: gFTT layer " + std::to_string(tgt) + " out of range");
    if (!seen_targets.insert(tgt).second)
      throw ConfigError("transplant: strategy maps gFTT layer " + std::to_string(tgt) +
                        " twice");
  }
  head_count_compat(lm.cfg.n_heads, model.cfg.n_heads);

  std::vector<std::string> mask;
  for (auto [src, tgt] : strategy.mapping) {
    const AttnLayer<S>& from = lm.layers[src];
    AttnLayer<S>& to = model.layers[tgt];
    auto install = [&](const Tensor<S>& s_t, Tensor<S>& d_t, const char* field) {
      if (s_t.shape() != d_t.shape())
        throw DataError("transplant: shape mismatch on " + std::string(field) + ": " +
                        shape_str(s_t.shape()) + " vs " + shape_str(d_t.shape()));
      std::copy_n(s_t.data(), s_t.numel(), d_t.data());
      d_t.set_frozen(true);
      mask.push_back("layer" + std::to_string(tgt) + "." + field);
    };
    install(from.w_k, to.w_k, "w_k");
    install(from.b_k, to.b_k, "b_k");
    install(from.w_v, to.w_v, "w_v");
    install(from.b_v, to.b_v, "b_v");
    log_debug("transplant: LM layer %d -> gFTT layer %d (W_k, b_k, W_v, b_v frozen)", src,
              tgt);
  }
  return mask;
}

template <class S>
FrozenReport verify_frozen(const Gftt<S>& model, const std::vector<std::string>& freeze_mask,
                           const std::map<std::string, std::uint64_t>& reference_hashes) {
  FrozenReport report;
  auto named = model.named_params();
  auto find = [&](const std::string& name) -> const Tensor<S>* {
    for (const auto& [n, t] : named)
      if (n == name) return &t;
    return nullptr;
  };

  std::set<std::string> layers_seen;
  for (const auto& name : freeze_mask) {
    typename FrozenReport::Entry e;
    e.name = name;
    const Tensor<S>* t = find(name);
    auto ref = reference_hashes.find(name);
    if (t && ref != reference_hashes.end()) {
      e.expected = ref->second;
      e.actual = tensor_hash(*t);
      e.pass = e.expected == e.actual;
    }
    if (!e.pass) report.all_pass = false;
    report.frozen.push_back(e);
    auto dot = name.find('.');
    if (dot != std::string::npos) layers_seen.insert(name.substr(0, dot));
  }

  for (const auto& layer : layers_seen) {
    typename FrozenReport::WqEntry w;
    w.name = layer + ".w_q";
    const Tensor<S>* t = find(w.name);
    auto ref = reference_hashes.find(w.name);
    if (t && ref != reference_hashes.end()) w.changed = tensor_hash(*t) != ref->second;
    report.wq.push_back(w);
  }
  std::sort(report.wq.begin(), report.wq.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  return report;
}

std::string format_frozen_report(const FrozenReport& report) {
  std::string out;
  for (const auto& e : report.frozen)
    out += "frozen " + e.name + " " + (e.pass ? "PASS" : "FAIL") + "\n";
  for (const auto& w : report.wq)
    out += "trainable " + w.name + " changed: " + (w.changed ? "yes" : "no") + "\n";
  out += std::string("overall: ") + (report.all_pass ? "PASS" : "FAIL") + "\n";
  return out;
}

template std::vector<std::string> apply_transplant(const MiniLm<float>&, Gftt<float>&,
                                                   const TransplantStrategy&);
template std::vector<std::string> apply_transplant(const MiniLm<double>&, Gftt<double>&,
                                                   const TransplantStrategy&);
template FrozenReport verify_frozen(const Gftt<float>&, const std::vector<std::string>&,
                                    const std::map<std::string, std::uint64_t>&);
template FrozenReport verify_frozen(const Gftt<double>&, const std::vector<std::string>&,
                                    const std::map<std::string, std::uint64_t>&);

}  // namespace lattle
