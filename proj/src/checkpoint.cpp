#include "lattle/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "lattle/transplant.hpp"

namespace lattle {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'T', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw CheckpointError(CheckpointErrorKind::Truncated,
                            "checkpoint " + path + " truncated at byte " + std::to_string(pos));
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<unsigned char>(buf[pos]) |
                      (static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<unsigned char>(buf[pos++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
};

}  // namespace

const NamedTensorData* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  if (ckpt.kind().empty())
    throw CheckpointError(CheckpointErrorKind::WrongKind, "checkpoint metadata lacks a kind");
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string meta = ckpt.meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(t.frozen ? 1 : 0);
    out.push_back(static_cast<char>(t.dims.size()));
    std::size_t numel = 1;
    for (int d : t.dims) {
      put_u32(out, static_cast<std::uint32_t>(d));
      numel *= static_cast<std::size_t>(d);
    }
    out.push_back(0);  // dtype f32
    if (t.data.size() != numel)
      throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                            "tensor " + t.name + " payload has " +
                                std::to_string(t.data.size()) + " values, dims imply " +
                                std::to_string(numel));
    for (float f : t.data) put_f32(out, f);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("save_checkpoint: write failed for " + path);

  std::ofstream h(hash_sidecar_path(path), std::ios::binary | std::ios::trunc);
  if (!h) throw DataError("save_checkpoint: cannot open hash sidecar for " + path);
  for (const auto& t : ckpt.tensors) {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a(t.data.data(), t.data.size() * sizeof(float))));
    h << t.name << '\t' << hex << '\n';
  }
  if (!h) throw DataError("save_checkpoint: sidecar write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expect_kind) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  Reader r{buf, 0, path};

  if (r.bytes(4) != std::string(kMagic, 4))
    throw CheckpointError(CheckpointErrorKind::BadMagic,
                          "checkpoint " + path + " has a bad magic number");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError(CheckpointErrorKind::BadVersion,
                          "checkpoint " + path + " has unsupported format version " +
                              std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t meta_len = r.u32();
  try {
    ckpt.meta = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                          "checkpoint " + path + " has unparsable metadata: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensorData t;
    t.name = r.bytes(r.u16());
    t.frozen = r.u8() != 0;
    const int rank = r.u8();
    std::size_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      t.dims.push_back(static_cast<int>(r.u32()));
      numel *= static_cast<std::size_t>(t.dims.back());
    }
    const std::uint8_t dtype = r.u8();
    if (dtype != 0)
      throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                            "tensor " + t.name + " has unsupported dtype " +
                                std::to_string(dtype));
    t.data.reserve(numel);
    for (std::size_t j = 0; j < numel; ++j) t.data.push_back(r.f32());
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pos != buf.size())
    throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                          "checkpoint " + path + " has " +
                              std::to_string(buf.size() - r.pos) + " trailing bytes");
  if (!expect_kind.empty() && ckpt.kind() != expect_kind)
    throw CheckpointError(CheckpointErrorKind::WrongKind,
                          "checkpoint " + path + " holds a '" + ckpt.kind() +
                              "' model, expected '" + expect_kind + "'");
  return ckpt;
}

std::string hash_sidecar_path(const std::string& ckpt_path) { return ckpt_path + ".hash"; }

std::map<std::string, std::uint64_t> load_hash_sidecar(const std::string& sidecar_path) {
  std::ifstream f(sidecar_path, std::ios::binary);
  if (!f) throw DataError("load_hash_sidecar: cannot open " + sidecar_path);
  std::map<std::string, std::uint64_t> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("load_hash_sidecar: malformed line in " + sidecar_path);
    out[line.substr(0, tab)] = std::stoull(line.substr(tab + 1), nullptr, 16);
  }
  return out;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema.columns)
    cols.push_back({{"name", c.name},
                    {"kind", c.kind == ColKind::Numeric ? "numeric" : "categorical"}});
  return {{"columns", cols}, {"label", schema.label_column}, {"classes", schema.classes}};
}

Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  for (const auto& c : j.at("columns"))
    s.columns.push_back({c.at("name").get<std::string>(),
                         c.at("kind").get<std::string>() == "numeric" ? ColKind::Numeric
                                                                      : ColKind::Categorical});
  s.label_column = j.at("label").get<std::string>();
  s.classes = j.at("classes").get<std::vector<std::string>>();
  return s;
}

namespace {

std::vector<NamedTensorData> pack_params(
    const std::vector<std::pair<std::string, Tensor<float>>>& named) {
  std::vector<NamedTensorData> out;
  for (const auto& [name, t] : named) {
    NamedTensorData d;
    d.name = name;
    d.frozen = t.frozen();
    d.dims = t.shape();
    d.data = t.data_vec();
    out.push_back(std::move(d));
  }
  return out;
}

void install_params(const Checkpoint& ckpt,
                    std::vector<std::pair<std::string, Tensor<float>>>& named) {
  if (ckpt.tensors.size() != named.size())
    throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                          "checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                              " tensors, model declares " + std::to_string(named.size()));
  for (auto& [name, t] : named) {
    const NamedTensorData* d = ckpt.find(name);
    if (!d)
      throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                            "checkpoint lacks tensor '" + name + "'");
    if (d->dims != t.shape())
      throw CheckpointError(CheckpointErrorKind::SizeMismatch,
                            "tensor '" + name + "' has dims " + shape_str(d->dims) +
                                ", model expects " + shape_str(t.shape()));
    std::copy(d->data.begin(), d->data.end(), t.data());
    t.set_frozen(d->frozen);
  }
}

}  // namespace

Checkpoint checkpoint_from_lm(const MiniLm<float>& lm, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "mini-lm"},
               {"seed", seed},
               {"config",
                {{"n_layers", lm.cfg.n_layers},
                 {"n_heads", lm.cfg.n_heads},
                 {"d_model", lm.cfg.d_model},
                 {"ffn_hidden", lm.cfg.ffn_hidden},
                 {"max_len", lm.cfg.max_len},
                 {"vocab_size", lm.cfg.vocab_size},
                 {"n_classes", lm.cfg.n_classes},
                 {"head_layers", lm.cfg.head_layers},
                 {"head_heads", lm.cfg.head_heads},
                 {"dropout", lm.cfg.dropout}}}};
  ckpt.tensors = pack_params(lm.named_params());
  return ckpt;
}

MiniLm<float> lm_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind() != "mini-lm")
    throw CheckpointError(CheckpointErrorKind::WrongKind,
                          "expected a mini-lm checkpoint, found kind '" + ckpt.kind() + "'");
  const auto& c = ckpt.meta.at("config");
  LmConfig cfg;
  cfg.n_layers = c.at("n_layers");
  cfg.n_heads = c.at("n_heads");
  cfg.d_model = c.at("d_model");
  cfg.ffn_hidden = c.at("ffn_hidden");
  cfg.max_len = c.at("max_len");
  cfg.vocab_size = c.at("vocab_size");
  cfg.n_classes = c.at("n_classes");
  cfg.head_layers = c.at("head_layers");
  cfg.head_heads = c.at("head_heads");
  cfg.dropout = c.at("dropout");
  Rng rng(0);
  MiniLm<float> lm = MiniLm<float>::init(cfg, rng);
  auto named = lm.named_params();
  install_params(ckpt, named);
  return lm;
}

Checkpoint checkpoint_from_gftt(const Gftt<float>& model, std::uint64_t seed,
                                const std::vector<std::string>& freeze_mask,
                                const Schema& target_schema) {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "gftt"},
               {"seed", seed},
               {"freeze_mask", freeze_mask},
               {"schema", schema_to_json(target_schema)},
               {"config",
                {{"n_layers", model.cfg.n_layers},
                 {"n_heads", model.cfg.n_heads},
                 {"d_model", model.cfg.d_model},
                 {"ffn_hidden", model.cfg.ffn_hidden},
                 {"vocab_size", model.cfg.vocab_size},
                 {"n_classes", model.cfg.n_classes},
                 {"n_features", model.cfg.n_features},
                 {"dropout", model.cfg.dropout}}}};
  ckpt.tensors = pack_params(model.named_params());
  return ckpt;
}

Gftt<float> gftt_from_checkpoint(const Checkpoint& ckpt,
                                 std::vector<std::string>* freeze_mask_out,
                                 Schema* schema_out) {
  if (ckpt.kind() != "gftt")
    throw CheckpointError(CheckpointErrorKind::WrongKind,
                          "expected a gftt checkpoint, found kind '" + ckpt.kind() + "'");
  const auto& c = ckpt.meta.at("config");
  GfttConfig cfg;
  cfg.n_layers = c.at("n_layers");
  cfg.n_heads = c.at("n_heads");
  cfg.d_model = c.at("d_model");
  cfg.ffn_hidden = c.at("ffn_hidden");
  cfg.vocab_size = c.at("vocab_size");
  cfg.n_classes = c.at("n_classes");
  cfg.n_features = c.at("n_features");
  cfg.dropout = c.at("dropout");
  Rng rng(0);
  Gftt<float> model = Gftt<float>::init(cfg, rng);
  auto named = model.named_params();
  install_params(ckpt, named);
  if (freeze_mask_out)
    *freeze_mask_out = ckpt.meta.value("freeze_mask", std::vector<std::string>{});
  if (schema_out && ckpt.meta.contains("schema"))
    *schema_out = schema_from_json(ckpt.meta.at("schema"));
  return model;
}

}  // namespace lattle
