#include "lattle/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace lattle {

namespace {
const char* kReservedNames[] = {"<pad>", "<unk>", "<cls>"};
}

std::vector<std::string> word_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    int dots = 0;
    while (!word.empty() && word.back() == '.') {
      word.pop_back();
      ++dots;
    }
    if (!word.empty()) out.push_back(word);
    for (int i = 0; i < dots; ++i) out.emplace_back(".");
    word.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)))
      flush();
    else
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  flush();
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_freq,
                       int max_sequence_length) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
  std::map<std::string, long long> freq;
  for (const auto& line : corpus)
    for (const auto& tok : word_tokenize(line)) ++freq[tok];
  if (freq.empty()) throw DataError("build_vocab: corpus contains no tokens");

  std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.max_sequence_length = max_sequence_length;
  for (const char* r : kReservedNames) {
    v.token_to_id[r] = v.size();
    v.id_to_token.emplace_back(r);
  }
  for (const auto& [tok, count] : items) {
    if (count < min_freq) continue;
    v.token_to_id[tok] = v.size();
    v.id_to_token.push_back(tok);
  }
  return v;
}

std::vector<int> encode(const Vocabulary& v, const std::string& text) {
  std::vector<int> out;
  for (const auto& tok : word_tokenize(text)) {
    if (static_cast<int>(out.size()) >= v.max_sequence_length) break;
    out.push_back(v.id_of(tok));
  }
  return out;
}

std::string decode(const Vocabulary& v, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= v.size())
      throw IndexError("decode: id " + std::to_string(id) + " out of range");
    const std::string& tok = v.id_to_token[id];
    if (!out.empty() && tok != ".") out.push_back(' ');
    out += tok;
  }
  return out;
}

void save_vocab(const Vocabulary& v, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_vocab: cannot open " + path);
  for (int id = 0; id < v.size(); ++id) f << v.id_to_token[id] << '\t' << id << '\n';
  if (!f) throw DataError("save_vocab: write failed for " + path);
}

Vocabulary load_vocab(const std::string& path, int max_sequence_length) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_vocab: cannot open " + path);
  Vocabulary v;
  v.max_sequence_length = max_sequence_length;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("load_vocab: malformed line " + std::to_string(line_no) + " in " + path);
    std::string tok = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id != v.size())
      throw DataError("load_vocab: non-contiguous id " + std::to_string(id) + " at line " +
                      std::to_string(line_no));
    v.token_to_id[tok] = id;
    v.id_to_token.push_back(tok);
  }
  if (v.size() < 3) throw DataError("load_vocab: missing reserved tokens in " + path);
  return v;
}

}  // namespace lattle
