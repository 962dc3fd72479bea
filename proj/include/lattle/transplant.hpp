#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lattle/gftt.hpp"
#include "lattle/mini_lm.hpp"

namespace lattle {

// 64-bit FNV-1a over raw bytes; the content hash used by the checkpoint
// sidecar and verify_frozen.
std::uint64_t fnv1a(const void* data, std::size_t n);

template <class S>
std::uint64_t tensor_hash(const Tensor<S>& t) {
  return fnv1a(t.data(), t.numel() * sizeof(S));
}

struct TransplantStrategy {
  std::string name;
  std::vector<std::pair<int, int>> mapping;  // (LM source layer, gFTT target layer)
};

// Presets: proposed = [(L-1, 0)]; top-to-two = [(L-1, 0), (L-1, 1)];
// toptwo-to-two = [(L-1, 0), (L-2, 1)]; none = [].
TransplantStrategy strategy_from_name(const std::string& name, int lm_layers, int gftt_layers);
std::vector<std::string> strategy_names();

// Copies W_k/b_k/W_v/b_v from each mapped LM layer into its gFTT layer and
// marks exactly those tensors frozen. Returns the freeze mask (tensor names
// in the gFTT registry). Requires equal d_model; differing head counts only
// warn (the transplant moves combined d x d matrices).
template <class S>
std::vector<std::string> apply_transplant(const MiniLm<S>& lm, Gftt<S>& model,
                                          const TransplantStrategy& strategy);

void head_count_compat(int lm_heads, int gftt_heads);

struct FrozenReport {
  struct Entry {
    std::string name;
    std::uint64_t expected = 0, actual = 0;
    bool pass = false;
  };
  std::vector<Entry> frozen;  // one per masked tensor
  struct WqEntry {
    std::string name;
    bool changed = false;  // differs from its value at transplant time
  };
  std::vector<WqEntry> wq;  // W_q of each transplanted layer
  bool all_pass = true;
};

// Recomputes hashes of masked tensors against the reference (typically the
// checkpoint sidecar) and reports whether each transplanted layer's W_q moved
// away from its reference value. Report-only, never throws.
template <class S>
FrozenReport verify_frozen(const Gftt<S>& model, const std::vector<std::string>& freeze_mask,
                           const std::map<std::string, std::uint64_t>& reference_hashes);

std::string format_frozen_report(const FrozenReport& report);

}  // namespace lattle
