#include "lotlip/tokenizer.hpp"

#include <gtest/gtest.h>

#include <map>
#include <regex>

namespace lotlip {
namespace {

Vocabulary vocab_of(std::initializer_list<const char*> words) {
  return Vocabulary::from_words(std::vector<std::string>(words.begin(), words.end()));
}

std::string layout_string(const std::vector<Role>& roles) {
  std::string s;
  for (Role r : roles) s += role_symbol(r);
  return s;
}

TEST(Vocabulary, ReservedIdsComeFirst) {
  Vocabulary v = vocab_of({"dog", "cat"});
  EXPECT_EQ(v.id_of("[PAD]"), Vocabulary::kPad);
  EXPECT_EQ(v.id_of("[CLS]"), Vocabulary::kCls);
  EXPECT_EQ(v.id_of("[SEP]"), Vocabulary::kSep);
  EXPECT_EQ(v.corner_id(1), Vocabulary::kFirstCorner);
  EXPECT_EQ(v.token_of(v.corner_id(3)), "[COR3]");
  EXPECT_EQ(v.id_of("cat"), v.first_word_id());
  EXPECT_EQ(v.id_of("dog"), v.first_word_id() + 1);
  EXPECT_EQ(v.id_of("bird"), Vocabulary::kUnk);
  EXPECT_THROW(v.token_of(static_cast<TokenId>(v.size())), Error);
  EXPECT_THROW(v.corner_id(9), Error);
}

TEST(Vocabulary, RoundTripsThroughTokenList) {
  Vocabulary v = vocab_of({"red", "cube"});
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens(), v.max_corners()), v);
}

TEST(SplitSubcaptions, Examples) {
  EXPECT_EQ(split_subcaptions("A cat. A dog."), (std::vector<std::string>{"A cat.", "A dog."}));
  EXPECT_TRUE(split_subcaptions("").empty());
  EXPECT_TRUE(split_subcaptions("   ").empty());
  EXPECT_EQ(split_subcaptions("one. two"), (std::vector<std::string>{"one.", "two"}));
  EXPECT_EQ(split_subcaptions("a.b.c.d.e.f.g.h.").size(), 8u);
}

TEST(SplitSubcaptions, JoinRoundTripOnRandomTexts) {
  Rng rng(7);
  const std::vector<std::string> words{"red", "cube", "sits", "on", "a", "wooden", "table", "near", "lamp"};
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::string> sentences;
    const auto n = 1 + rng.uniform_index(9);
    for (std::size_t s = 0; s < n; ++s) {
      std::string sentence;
      const auto len = 1 + rng.uniform_index(6);
      for (std::size_t w = 0; w < len; ++w) sentence += (w ? " " : "") + words[rng.uniform_index(words.size())];
      sentences.push_back(sentence + ".");
    }
    const std::string text = join(sentences);
    const auto split = split_subcaptions(text);
    ASSERT_EQ(split, sentences);
    ASSERT_EQ(join(split), text);
  }
}

TEST(SplitWords, LowercasesAndDropsPunctuation) {
  EXPECT_EQ(split_words("A Red, CUBE!"), (std::vector<std::string>{"a", "red", "cube"}));
  EXPECT_EQ(split_words("caf\xc3\xa9 ok"), (std::vector<std::string>{"caf\xc3\xa9", "ok"}));
  EXPECT_TRUE(split_words(" .,; ").empty());
}

TEST(SampleConsecutive, WindowsAndClamp) {
  const std::vector<std::string> subs{"a.", "b.", "c.", "d."};
  const std::set<std::string> allowed{"a. b.", "b. c.", "c. d."};
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto w = sample_consecutive(subs, 2, s);
    EXPECT_TRUE(allowed.count(w)) << w;
    EXPECT_EQ(w, sample_consecutive(subs, 2, s));
  }
  const std::vector<std::string> one{"a."};
  EXPECT_EQ(sample_consecutive(one, 3, 42), "a.");
  EXPECT_EQ(sample_consecutive(subs, 9, 3), "a. b. c. d.");
  EXPECT_THROW(sample_consecutive(subs, 0, 1), Error);
  EXPECT_THROW(sample_consecutive(std::span<const std::string>{}, 1, 1), Error);
}

TEST(SampleConsecutive, UniformOverSeeds) {
  const std::vector<std::string> subs{"a.", "b.", "c.", "d."};
  std::map<std::string, int> counts;
  const int n = 10000;
  for (int s = 0; s < n; ++s) ++counts[sample_consecutive(subs, 2, static_cast<std::uint64_t>(s))];
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [w, c] : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 3.0, 0.02) << w;
}

TEST(Tokenize, CornerLayoutExample) {
  Vocabulary v = vocab_of({"a", "cat"});
  const auto seq = tokenize("a cat.", 8, 2, v);
  const std::vector<TokenId> ids{Vocabulary::kCls, v.corner_id(1), v.corner_id(2), v.id_of("a"),
                                 v.id_of("cat"),   Vocabulary::kSep, Vocabulary::kPad, Vocabulary::kPad};
  EXPECT_EQ(seq.ids, ids);
  EXPECT_EQ(seq.roles, (std::vector<Role>{Role::Cls, Role::Corner, Role::Corner, Role::Text, Role::Text, Role::Sep,
                                          Role::Pad, Role::Pad}));
  EXPECT_EQ(seq.true_length, 6);
  EXPECT_EQ(seq.corners, 2);
}

TEST(Tokenize, NoCorners) {
  Vocabulary v = vocab_of({"a", "cat"});
  const auto seq = tokenize("a cat.", 4, 0, v);
  EXPECT_EQ(seq.ids, (std::vector<TokenId>{Vocabulary::kCls, v.id_of("a"), v.id_of("cat"), Vocabulary::kSep}));
}

TEST(Tokenize, SepAfterEverySubcaptionAndTruncation) {
  Vocabulary v = vocab_of({"a", "b", "c"});
  const auto seq = tokenize("a b. c.", 16, 1, v);
  EXPECT_EQ(layout_string(seq.roles), "GCTTSTSPPPPPPPPP");
  const auto single = tokenize("a b. c.", 16, 1, v, Segmentation::Single);
  EXPECT_EQ(layout_string(single.roles), "GCTTTSPPPPPPPPPP");
  const auto cut = tokenize("a b. c.", 4, 1, v);
  EXPECT_EQ(layout_string(cut.roles), "GCTT");
  EXPECT_EQ(cut.true_length, 4);
  EXPECT_THROW(tokenize("a", 2, 1, v), Error);
}

TEST(Tokenize, LayoutMatchesPatternOnRandomInput) {
  Rng rng(11);
  Vocabulary v = vocab_of({"x", "y", "z"});
  const std::string symbols = "xyz. ,";
  for (int t = 0; t < 500; ++t) {
    std::string text;
    const auto len = rng.uniform_index(40);
    for (std::size_t i = 0; i < len; ++i) text += symbols[rng.uniform_index(symbols.size())];
    const int m = static_cast<int>(rng.uniform_index(5));
    const int limit = m + 2 + static_cast<int>(rng.uniform_index(20));
    const auto seq = tokenize(text, limit, m, v);
    const std::string layout = layout_string(seq.roles);
    const std::regex pattern("G" + std::string(static_cast<std::size_t>(m), 'C') + "[TS]*P*");
    ASSERT_TRUE(std::regex_match(layout, pattern)) << layout;
    ASSERT_EQ(validate_layout(seq.roles), m);
    ASSERT_EQ(seq.limit(), limit);
  }
}

TEST(ValidateLayout, RejectsMalformed) {
  EXPECT_THROW(validate_layout(std::vector<Role>{Role::Text}), Error);
  EXPECT_THROW(validate_layout(std::vector<Role>{Role::Cls, Role::Text, Role::Corner}), Error);
  EXPECT_THROW(validate_layout(std::vector<Role>{Role::Cls, Role::Pad, Role::Text}), Error);
}

TEST(CountTextTokens, WordsPlusSeps) {
  EXPECT_EQ(count_text_tokens("a red cube. on a table."), 8u);
  EXPECT_EQ(count_text_tokens(""), 0u);
}

} // namespace
} // namespace lotlip
