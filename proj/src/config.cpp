#include "lattle/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lattle {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_u64(key, item));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': expected a comma-separated seed list");
  return out;
}

std::string fmt_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  // Prefer the shortest representation that round-trips.
  char shorter[64];
  for (int prec = 1; prec <= 16; ++prec) {
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, d);
    if (std::stod(shorter) == d) return shorter;
  }
  return buf;
}

std::string fmt_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (source_csv.empty()) throw ConfigError("config: source_csv is required");
  if (target_csv.empty()) throw ConfigError("config: target_csv is required");
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  if (d_model <= 0) throw ConfigError("config: d_model must be positive");
  if (lm_layers <= 0) throw ConfigError("config: lm_layers must be positive");
  if (gftt_layers <= 0) throw ConfigError("config: gftt_layers must be positive");
  if (lm_heads <= 0 || d_model % lm_heads != 0)
    throw ConfigError("config: lm_heads must divide d_model");
  if (gftt_heads <= 0 || d_model % gftt_heads != 0)
    throw ConfigError("config: gftt_heads must divide d_model");
  if (ffn_hidden <= 0) throw ConfigError("config: ffn_hidden must be positive");
  if (lm_head_layers <= 0) throw ConfigError("config: lm_head_layers must be positive");
  if (max_len <= 0) throw ConfigError("config: max_len must be positive");
  if (lm_lr <= 0 || tgt_lr <= 0) throw ConfigError("config: learning rates must be positive");
  if (lm_batch <= 0 || tgt_batch <= 0) throw ConfigError("config: batch sizes must be positive");
  if (lm_epochs <= 0 || tgt_epochs <= 0) throw ConfigError("config: epoch counts must be positive");
  if (tgt_patience < 0) throw ConfigError("config: tgt_patience must be non-negative");
  if (lm_weight_decay < 0 || tgt_weight_decay < 0)
    throw ConfigError("config: weight decay must be non-negative");
  if (lm_warmup_ratio <= 0 || lm_warmup_ratio >= 1 || tgt_warmup_ratio <= 0 ||
      tgt_warmup_ratio >= 1)
    throw ConfigError("config: warmup ratios must lie in (0, 1)");
  if (lm_dropout < 0 || lm_dropout >= 1 || tgt_dropout < 0 || tgt_dropout >= 1)
    throw ConfigError("config: dropout must lie in [0, 1)");
  if (seeds.empty()) throw ConfigError("config: seeds must list at least one seed");
  if (search_trials < 0) throw ConfigError("config: search_trials must be non-negative");
  if (search_epochs <= 0) throw ConfigError("config: search_epochs must be positive");
  if (vocab_min_freq <= 0) throw ConfigError("config: vocab_min_freq must be positive");
  if (threads <= 0) throw ConfigError("config: threads must be positive");
}

std::string ExperimentConfig::resolved_text() const {
  std::ostringstream os;
  os << "source_csv = " << source_csv << "\n";
  os << "target_csv = " << target_csv << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "label_column = " << label_column << "\n";
  if (!vocab_path.empty()) os << "vocab_path = " << vocab_path << "\n";
  if (!lm_checkpoint.empty()) os << "lm_checkpoint = " << lm_checkpoint << "\n";
  if (!gftt_checkpoint.empty()) os << "gftt_checkpoint = " << gftt_checkpoint << "\n";
  os << "d_model = " << d_model << "\n";
  os << "lm_layers = " << lm_layers << "\n";
  os << "gftt_layers = " << gftt_layers << "\n";
  os << "lm_heads = " << lm_heads << "\n";
  os << "gftt_heads = " << gftt_heads << "\n";
  os << "ffn_hidden = " << ffn_hidden << "\n";
  os << "lm_head_layers = " << lm_head_layers << "\n";
  os << "max_len = " << max_len << "\n";
  os << "lm_lr = " << fmt_double(lm_lr) << "\n";
  os << "lm_batch = " << lm_batch << "\n";
  os << "lm_epochs = " << lm_epochs << "\n";
  os << "lm_weight_decay = " << fmt_double(lm_weight_decay) << "\n";
  os << "lm_warmup_ratio = " << fmt_double(lm_warmup_ratio) << "\n";
  os << "lm_dropout = " << fmt_double(lm_dropout) << "\n";
  os << "lm_full_finetune = " << (lm_full_finetune ? "true" : "false") << "\n";
  os << "pretrain_seed = " << pretrain_seed << "\n";
  os << "tgt_lr = " << fmt_double(tgt_lr) << "\n";
  os << "tgt_batch = " << tgt_batch << "\n";
  os << "tgt_epochs = " << tgt_epochs << "\n";
  os << "tgt_patience = " << tgt_patience << "\n";
  os << "tgt_weight_decay = " << fmt_double(tgt_weight_decay) << "\n";
  os << "tgt_warmup_ratio = " << fmt_double(tgt_warmup_ratio) << "\n";
  os << "tgt_dropout = " << fmt_double(tgt_dropout) << "\n";
  os << "strategy = " << strategy << "\n";
  os << "seeds = " << fmt_seeds(seeds) << "\n";
  os << "search_trials = " << search_trials << "\n";
  os << "search_seed = " << search_seed << "\n";
  os << "search_epochs = " << search_epochs << "\n";
  os << "vocab_min_freq = " << vocab_min_freq << "\n";
  return os.str();
}

ExperimentConfig parse_experiment_config_text(const std::string& text,
                                              const std::string& origin) {
  ExperimentConfig cfg;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"source_csv", [&](const std::string&, const std::string& v) { cfg.source_csv = v; }},
      {"target_csv", [&](const std::string&, const std::string& v) { cfg.target_csv = v; }},
      {"out_dir", [&](const std::string&, const std::string& v) { cfg.out_dir = v; }},
      {"label_column", [&](const std::string&, const std::string& v) { cfg.label_column = v; }},
      {"vocab_path", [&](const std::string&, const std::string& v) { cfg.vocab_path = v; }},
      {"lm_checkpoint", [&](const std::string&, const std::string& v) { cfg.lm_checkpoint = v; }},
      {"gftt_checkpoint", [&](const std::string&, const std::string& v) { cfg.gftt_checkpoint = v; }},
      {"d_model", [&](const std::string& k, const std::string& v) { cfg.d_model = static_cast<int>(parse_int(k, v)); }},
      {"lm_layers", [&](const std::string& k, const std::string& v) { cfg.lm_layers = static_cast<int>(parse_int(k, v)); }},
      {"gftt_layers", [&](const std::string& k, const std::string& v) { cfg.gftt_layers = static_cast<int>(parse_int(k, v)); }},
      {"lm_heads", [&](const std::string& k, const std::string& v) { cfg.lm_heads = static_cast<int>(parse_int(k, v)); }},
      {"gftt_heads", [&](const std::string& k, const std::string& v) { cfg.gftt_heads = static_cast<int>(parse_int(k, v)); }},
      {"ffn_hidden", [&](const std::string& k, const std::string& v) { cfg.ffn_hidden = static_cast<int>(parse_int(k, v)); }},
      {"lm_head_layers", [&](const std::string& k, const std::string& v) { cfg.lm_head_layers = static_cast<int>(parse_int(k, v)); }},
      {"max_len", [&](const std::string& k, const std::string& v) { cfg.max_len = static_cast<int>(parse_int(k, v)); }},
      {"lm_lr", [&](const std::string& k, const std::string& v) { cfg.lm_lr = parse_double(k, v); }},
      {"lm_batch", [&](const std::string& k, const std::string& v) { cfg.lm_batch = static_cast<int>(parse_int(k, v)); }},
      {"lm_epochs", [&](const std::string& k, const std::string& v) { cfg.lm_epochs = static_cast<int>(parse_int(k, v)); }},
      {"lm_weight_decay", [&](const std::string& k, const std::string& v) { cfg.lm_weight_decay = parse_double(k, v); }},
      {"lm_warmup_ratio", [&](const std::string& k, const std::string& v) { cfg.lm_warmup_ratio = parse_double(k, v); }},
      {"lm_dropout", [&](const std::string& k, const std::string& v) { cfg.lm_dropout = parse_double(k, v); }},
      {"lm_full_finetune", [&](const std::string& k, const std::string& v) { cfg.lm_full_finetune = parse_bool(k, v); }},
      {"pretrain_seed", [&](const std::string& k, const std::string& v) { cfg.pretrain_seed = parse_u64(k, v); }},
      {"tgt_lr", [&](const std::string& k, const std::string& v) { cfg.tgt_lr = parse_double(k, v); }},
      {"tgt_batch", [&](const std::string& k, const std::string& v) { cfg.tgt_batch = static_cast<int>(parse_int(k, v)); }},
      {"tgt_epochs", [&](const std::string& k, const std::string& v) { cfg.tgt_epochs = static_cast<int>(parse_int(k, v)); }},
      {"tgt_patience", [&](const std::string& k, const std::string& v) { cfg.tgt_patience = static_cast<int>(parse_int(k, v)); }},
      {"tgt_weight_decay", [&](const std::string& k, const std::string& v) { cfg.tgt_weight_decay = parse_double(k, v); }},
      {"tgt_warmup_ratio", [&](const std::string& k, const std::string& v) { cfg.tgt_warmup_ratio = parse_double(k, v); }},
      {"tgt_dropout", [&](const std::string& k, const std::string& v) { cfg.tgt_dropout = parse_double(k, v); }},
      {"strategy", [&](const std::string&, const std::string& v) { cfg.strategy = v; }},
      {"seeds", [&](const std::string& k, const std::string& v) { cfg.seeds = parse_seed_list(k, v); }},
      {"search_trials", [&](const std::string& k, const std::string& v) { cfg.search_trials = static_cast<int>(parse_int(k, v)); }},
      {"search_seed", [&](const std::string& k, const std::string& v) { cfg.search_seed = parse_u64(k, v); }},
      {"search_epochs", [&](const std::string& k, const std::string& v) { cfg.search_epochs = static_cast<int>(parse_int(k, v)); }},
      {"vocab_min_freq", [&](const std::string& k, const std::string& v) { cfg.vocab_min_freq = static_cast<int>(parse_int(k, v)); }},
  };

  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown config key '" +
                        key + "'");
    it->second(key, value);
  }
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config_text(ss.str(), path);
}

std::string schema_path_for(const std::string& csv_path) {
  const std::string suffix = ".csv";
  if (csv_path.size() > suffix.size() &&
      csv_path.compare(csv_path.size() - suffix.size(), suffix.size(), suffix) == 0)
    return csv_path.substr(0, csv_path.size() - suffix.size()) + ".schema";
  return csv_path + ".schema";
}

}  // namespace lattle
