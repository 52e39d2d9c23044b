#pragma once

#include "lotlip/common.hpp"
#include "lotlip/rng.hpp"
#include "lotlip/vocabulary.hpp"

#include <cctype>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lotlip {

enum class Role : std::uint8_t { Cls, Corner, Text, Sep, Pad };

inline char role_symbol(Role r) {
  switch (r) {
  case Role::Cls: return 'G';
  case Role::Corner: return 'C';
  case Role::Text: return 'T';
  case Role::Sep: return 'S';
  case Role::Pad: return 'P';
  }
  return '?';
}

inline const char* role_name(Role r) {
  switch (r) {
  case Role::Cls: return "CLS";
  case Role::Corner: return "CORNER";
  case Role::Text: return "TEXT";
  case Role::Sep: return "SEP";
  case Role::Pad: return "PAD";
  }
  return "?";
}

/// Fixed-length token sequence: [CLS] COR_1..COR_m (TEXT|SEP)* PAD*.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<Role> roles;
  int true_length = 0;
  int corners = 0;

  int limit() const { return static_cast<int>(ids.size()); }
  bool operator==(const TokenSequence&) const = default;
};

/// Throws unless `roles` is CLS CORNER* (TEXT|SEP)* PAD*. Returns the corner count.
inline int validate_layout(std::span<const Role> roles) {
  if (roles.empty() || roles[0] != Role::Cls) throw Error("malformed role layout: position 0 must be CLS");
  std::size_t i = 1;
  while (i < roles.size() && roles[i] == Role::Corner) ++i;
  const int corners = static_cast<int>(i - 1);
  while (i < roles.size() && (roles[i] == Role::Text || roles[i] == Role::Sep)) ++i;
  while (i < roles.size() && roles[i] == Role::Pad) ++i;
  if (i != roles.size()) {
    throw Error("malformed role layout: unexpected " + std::string(role_name(roles[i])) + " at position " +
                std::to_string(i));
  }
  return corners;
}

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Splits a text into period-terminated sentences. A trailing fragment without
/// a period is kept as the last sub-caption.
inline std::vector<std::string> split_subcaptions(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '.') {
      auto piece = trim(text.substr(start, i + 1 - start));
      out.emplace_back(piece);
      start = i + 1;
    }
  }
  if (auto rest = trim(text.substr(start)); !rest.empty()) out.emplace_back(rest);
  return out;
}

/// Lowercased word tokens; every ASCII non-alphanumeric byte is a separator and is dropped.
/// Bytes >= 0x80 are kept as word characters so UTF-8 words survive intact.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c >= 0x80 || std::isalnum(c)) {
      current.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

inline std::string join(std::span<const std::string> parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Start index of a uniformly drawn window of `window` consecutive items among `count`.
inline std::size_t sample_window_start(std::size_t count, std::size_t window, Rng& rng) {
  return static_cast<std::size_t>(rng.uniform_index(count - window + 1));
}

/// Joins min(k, n) consecutive sub-captions starting at a seeded uniform offset.
inline std::string sample_consecutive(std::span<const std::string> subcaps, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw Error("sample_consecutive requires k >= 1");
  if (subcaps.empty()) throw Error("empty long text");
  const std::size_t window = std::min(k, subcaps.size());
  Rng rng(mix_seed(seed));
  const std::size_t start = sample_window_start(subcaps.size(), window, rng);
  return join(subcaps.subspan(start, window));
}

enum class Segmentation {
  /// One SEP after every period-terminated sub-caption.
  Subcaptions,
  /// The whole text is one caption with a single terminal SEP.
  Single,
};

/// [CLS] COR_1..COR_m words SEP ... truncated at `limit` and padded with PAD.
inline TokenSequence tokenize(std::string_view text, int limit, int m, const Vocabulary& vocab,
                              Segmentation seg = Segmentation::Subcaptions) {
  if (m < 0) throw Error("corner count must be nonnegative");
  if (limit < m + 2) throw Error("limit too small for corner tokens");
  if (m > vocab.max_corners()) {
    throw Error("corner count " + std::to_string(m) + " exceeds vocabulary maximum " +
                std::to_string(vocab.max_corners()));
  }
  TokenSequence seq;
  seq.corners = m;
  seq.ids.reserve(static_cast<std::size_t>(limit));
  seq.roles.reserve(static_cast<std::size_t>(limit));
  const auto emit = [&](TokenId id, Role role) {
    if (seq.limit() < limit) {
      seq.ids.push_back(id);
      seq.roles.push_back(role);
    }
  };
  emit(Vocabulary::kCls, Role::Cls);
  for (int k = 1; k <= m; ++k) emit(vocab.corner_id(k), Role::Corner);
  const auto emit_caption = [&](std::string_view caption) {
    for (const auto& w : split_words(caption)) emit(vocab.id_of(w), Role::Text);
    emit(Vocabulary::kSep, Role::Sep);
  };
  if (seg == Segmentation::Single) {
    emit_caption(text);
  } else {
    for (const auto& sub : split_subcaptions(text)) emit_caption(sub);
  }
  seq.true_length = seq.limit();
  while (seq.limit() < limit) {
    seq.ids.push_back(Vocabulary::kPad);
    seq.roles.push_back(Role::Pad);
  }
  return seq;
}

/// Number of word tokens plus one SEP per sub-caption, untruncated.
inline std::size_t count_text_tokens(std::string_view text) {
  std::size_t n = 0;
  for (const auto& sub : split_subcaptions(text)) n += split_words(sub).size() + 1;
  return n;
}

} // namespace lotlip
