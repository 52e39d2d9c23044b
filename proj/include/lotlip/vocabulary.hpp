#pragma once

#include "lotlip/common.hpp"

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lotlip {

using TokenId = std::int32_t;

/// Token-to-id table. Special tokens occupy the lowest ids:
/// PAD=0, CLS=1, SEP=2, UNK=3, then COR_1..COR_max, then words.
class Vocabulary {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kCls = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kFirstCorner = 4;
  static constexpr int kDefaultMaxCorners = 8;

  explicit Vocabulary(int max_corners = kDefaultMaxCorners) : max_corners_(max_corners) {
    if (max_corners < 0) throw Error("max_corners must be nonnegative");
    for (const char* special : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) push(special);
    for (int k = 1; k <= max_corners; ++k) push("[COR" + std::to_string(k) + "]");
  }

  /// Builds a vocabulary whose word ids follow sorted word order.
  template <typename Range>
  static Vocabulary from_words(const Range& words, int max_corners = kDefaultMaxCorners) {
    std::set<std::string> sorted(std::begin(words), std::end(words));
    Vocabulary vocab(max_corners);
    for (const auto& w : sorted) vocab.add_word(w);
    return vocab;
  }

  TokenId add_word(const std::string& word) {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    return push(word);
  }

  TokenId corner_id(int k) const {
    if (k < 1 || k > max_corners_) {
      throw Error("corner index " + std::to_string(k) + " outside 1.." + std::to_string(max_corners_));
    }
    return kFirstCorner + k - 1;
  }

  TokenId first_word_id() const { return kFirstCorner + max_corners_; }
  int max_corners() const { return max_corners_; }
  std::size_t size() const { return tokens_.size(); }

  /// Unknown words map to UNK.
  TokenId id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

  const std::string& token_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error("token id " + std::to_string(id) + " out of vocabulary range");
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const {
    return max_corners_ == other.max_corners_ && tokens_ == other.tokens_;
  }

  /// Restores a vocabulary from its token list (the order defines ids).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens, int max_corners) {
    Vocabulary vocab(max_corners);
    const std::size_t reserved = vocab.size();
    if (tokens.size() < reserved) throw Error("vocabulary token list shorter than reserved block");
    for (std::size_t i = 0; i < reserved; ++i) {
      if (tokens[i] != vocab.tokens_[i]) throw Error("vocabulary reserved token mismatch at id " + std::to_string(i));
    }
    for (std::size_t i = reserved; i < tokens.size(); ++i) {
      if (vocab.contains(tokens[i])) throw Error("duplicate vocabulary token '" + tokens[i] + "'");
      vocab.push(tokens[i]);
    }
    return vocab;
  }

private:
  TokenId push(const std::string& token) {
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  int max_corners_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

} // namespace lotlip
