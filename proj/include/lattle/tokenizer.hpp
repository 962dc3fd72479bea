#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lattle/errors.hpp"

namespace lattle {

// Word-level vocabulary over serialized rows. Reserved ids: PAD=0, UNK=1,
// CLS=2; real tokens start at 3, assigned by (frequency desc, lexicographic).
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // index = id; reserved slots included
  int max_sequence_length = 1024;

  int size() const { return static_cast<int>(id_to_token.size()); }
  bool contains(const std::string& tok) const { return token_to_id.count(tok) > 0; }
  int id_of(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }
};

// Lowercases, splits on whitespace, and splits trailing '.' off each word as
// its own token ("25." -> "25", "."; interior dots as in "0.5" are kept).
std::vector<std::string> word_tokenize(const std::string& text);

Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_freq = 1,
                       int max_sequence_length = 1024);

// Unknown words -> UNK; output truncated to max_sequence_length.
std::vector<int> encode(const Vocabulary& v, const std::string& text);

// Inverse of encode up to lowercase normalization; '.' reattaches to the
// preceding word so "age is 25." round-trips.
std::string decode(const Vocabulary& v, const std::vector<int>& ids);

// One "token<TAB>id" line per entry, id order.
void save_vocab(const Vocabulary& v, const std::string& path);
Vocabulary load_vocab(const std::string& path, int max_sequence_length = 1024);

}  // namespace lattle
