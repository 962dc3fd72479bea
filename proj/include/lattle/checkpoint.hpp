#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lattle/gftt.hpp"
#include "lattle/mini_lm.hpp"

namespace lattle {

struct NamedTensorData {
  std::string name;
  bool frozen = false;
  std::vector<int> dims;
  std::vector<float> data;
};

// Single-file binary: "LTTL" magic, u32 LE version (=1), u32-length-prefixed
// UTF-8 JSON metadata (sorted keys, no timestamps -> canonical bytes), then a
// u32 tensor count and per tensor {name_len u16, name, frozen u8, rank u8,
// dims u32[rank], dtype u8 (0=f32), little-endian f32 payload}.
struct Checkpoint {
  nlohmann::json meta;  // must carry "kind": "mini-lm" | "gftt"
  std::vector<NamedTensorData> tensors;

  std::string kind() const { return meta.value("kind", ""); }
  const NamedTensorData* find(const std::string& name) const;
};

// Writes the checkpoint plus a `<path>.hash` sidecar with one
// "name<TAB>fnv1a-hex" line per tensor.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

// Validates magic, version and payload sizes; when expect_kind is nonempty,
// a different metadata kind raises a WrongKind checkpoint error.
Checkpoint load_checkpoint(const std::string& path, const std::string& expect_kind = "");

std::string hash_sidecar_path(const std::string& ckpt_path);
std::map<std::string, std::uint64_t> load_hash_sidecar(const std::string& sidecar_path);

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);

// Model adapters. Loading reconstructs the model from the config echo in the
// metadata, then installs payloads (and frozen flags) by tensor name.
Checkpoint checkpoint_from_lm(const MiniLm<float>& lm, std::uint64_t seed);
MiniLm<float> lm_from_checkpoint(const Checkpoint& ckpt);
Checkpoint checkpoint_from_gftt(const Gftt<float>& model, std::uint64_t seed,
                                const std::vector<std::string>& freeze_mask,
                                const Schema& target_schema);
Gftt<float> gftt_from_checkpoint(const Checkpoint& ckpt,
                                 std::vector<std::string>* freeze_mask_out = nullptr,
                                 Schema* schema_out = nullptr);

}  // namespace lattle
