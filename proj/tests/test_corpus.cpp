#include "lotlip/corpus.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace lotlip {
namespace {

ManifestRecord text_record(std::string id, std::vector<std::string> long_texts, std::string short_text = "") {
  ManifestRecord r;
  r.id = std::move(id);
  r.image_feature = std::vector<double>{1.0, 0.0};
  r.short_text = std::move(short_text);
  r.long_texts = std::move(long_texts);
  return r;
}

// Independent recount: periods (plus a trailing fragment) and alphanumeric runs.
std::pair<std::size_t, std::size_t> naive_counts(const std::string& text) {
  std::size_t periods = 0, runs = 0;
  bool in_run = false, tail = false;
  for (unsigned char c : text) {
    const bool word = c >= 0x80 || std::isalnum(c);
    if (word && !in_run) ++runs;
    in_run = word;
    if (c == '.') {
      ++periods;
      tail = false;
    } else if (!std::isspace(c)) {
      tail = true;
    }
  }
  const std::size_t subcaps = periods + (tail ? 1 : 0);
  return {subcaps, runs + subcaps};
}

TEST(CorpusStats, HandCountedExample) {
  std::vector<ManifestRecord> rs{text_record("x", {"a. b."}), text_record("y", {"c."})};
  const auto s = corpus_stats(rs);
  EXPECT_EQ(s.n_images, 2u);
  EXPECT_EQ(s.n_texts, 2u);
  EXPECT_DOUBLE_EQ(s.avg_subcaptions_per_text, 1.5);
  EXPECT_DOUBLE_EQ(s.avg_tokens_per_text, 3.0);
}

TEST(CorpusStats, EmptyManifestIsZero) {
  std::istringstream in("");
  EXPECT_EQ(corpus_stats(in, nullptr), CorpusStats{});
}

TEST(CorpusStats, MatchesNaiveRescan) {
  SyntheticCorpusOptions opt;
  opt.n = 40;
  opt.n_attributes = 5;
  auto rs = generate_synthetic_corpus(opt);
  rs[3].long_texts.push_back("An extra note without a period");
  rs[7].long_texts.push_back("");
  std::size_t texts = 0, subcaps = 0, tokens = 0;
  for (const auto& r : rs) {
    for (const auto& t : r.long_texts) {
      if (t.empty()) continue;
      ++texts;
      const auto [sc, tk] = naive_counts(t);
      subcaps += sc;
      tokens += tk;
    }
  }
  const auto s = corpus_stats(rs);
  EXPECT_EQ(s.n_texts, texts);
  EXPECT_EQ(s.n_short_texts, rs.size());
  EXPECT_DOUBLE_EQ(s.avg_subcaptions_per_text, static_cast<double>(subcaps) / texts);
  EXPECT_DOUBLE_EQ(s.avg_tokens_per_text, static_cast<double>(tokens) / texts);
}

TEST(Manifest, SkipsBadLinesAndCountsThem) {
  std::istringstream in(
      "{\"id\":\"a\",\"image_feature\":[1,2],\"short_text\":\"x.\"}\n"
      "not json\n"
      "\n"
      "{\"id\":\"b\",\"image_feature\":[1,2]}\n"
      "{\"id\":\"c\",\"image_feature\":[1,2,3],\"short_text\":\"y.\"}\n");
  std::ostringstream warn;
  const auto r = read_manifest(in, 2, &warn);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].id, "a");
  EXPECT_EQ(r.skipped, 3u);
  EXPECT_NE(warn.str().find("line 2"), std::string::npos);
}

TEST(Manifest, RoundTrips) {
  SyntheticCorpusOptions opt;
  opt.n = 10;
  const auto rs = generate_synthetic_corpus(opt);
  std::stringstream io;
  write_manifest(io, rs);
  EXPECT_EQ(read_manifest(io, opt.feature_dim, nullptr).records, rs);
}

TEST(Synthetic, SmallExample) {
  SyntheticCorpusOptions opt;
  opt.n = 4;
  opt.n_attributes = 3;
  const auto rs = generate_synthetic_corpus(opt);
  ASSERT_EQ(rs.size(), 4u);
  for (const auto& r : rs) {
    ASSERT_EQ(r.long_texts.size(), 1u);
    EXPECT_EQ(std::count(r.long_texts[0].begin(), r.long_texts[0].end(), '.'), 3);
    EXPECT_EQ(r.attributes.size(), 3u);
    ASSERT_TRUE(r.label);
    EXPECT_EQ(*r.label, attribute_word(0, static_cast<std::size_t>(r.attributes[0])));
    EXPECT_NE(r.short_text.find(*r.label), std::string::npos);
  }
}

TEST(Synthetic, DeterministicBytes) {
  SyntheticCorpusOptions opt;
  std::ostringstream a, b;
  write_manifest(a, generate_synthetic_corpus(opt));
  write_manifest(b, generate_synthetic_corpus(opt));
  EXPECT_EQ(a.str(), b.str());
  opt.seed = 2;
  std::ostringstream c;
  write_manifest(c, generate_synthetic_corpus(opt));
  EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, DistinctTuplesWhenAvailable) {
  for (std::size_t n : {16u, 200u, 256u}) {
    SyntheticCorpusOptions opt;
    opt.n = n;
    const auto rs = generate_synthetic_corpus(opt);
    std::set<std::vector<int>> seen;
    for (const auto& r : rs) seen.insert(r.attributes);
    EXPECT_EQ(seen.size(), n);
  }
}

TEST(Synthetic, StatsMatchGenerator) {
  SyntheticCorpusOptions opt;
  opt.n = 64;
  opt.n_attributes = 6;
  const auto s = corpus_stats(generate_synthetic_corpus(opt));
  EXPECT_EQ(s.n_images, 64u);
  EXPECT_EQ(s.n_texts, 64u);
  EXPECT_EQ(s.avg_subcaptions_per_text, 6.0);
}

TEST(Synthetic, FeaturesAreUnitAndSumOfAttributeVectors) {
  SyntheticCorpusOptions opt;
  opt.n = 8;
  const auto rs = generate_synthetic_corpus(opt);
  const auto vecs = synthetic_attribute_vectors(opt);
  for (const auto& r : rs) {
    std::vector<double> sum(opt.feature_dim, 0.0);
    for (std::size_t s = 0; s < opt.n_attributes; ++s) {
      const auto& u = vecs[s * opt.values_per_slot() + static_cast<std::size_t>(r.attributes[s])];
      for (std::size_t d = 0; d < opt.feature_dim; ++d) sum[d] += u[d];
    }
    double norm = 0.0;
    for (double x : sum) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < opt.feature_dim; ++d) EXPECT_NEAR((*r.image_feature)[d], sum[d] / norm, 1e-12);
  }
}

TEST(Synthetic, SplitKeepsTail) {
  SyntheticCorpusOptions opt;
  opt.n = 10;
  const auto rs = generate_synthetic_corpus(opt);
  const auto split = split_manifest(rs, 3);
  ASSERT_EQ(split.train.size(), 7u);
  ASSERT_EQ(split.eval.size(), 3u);
  EXPECT_EQ(split.eval.front().id, rs[7].id);
  EXPECT_THROW(split_manifest(rs, 11), Error);
}

} // namespace
} // namespace lotlip
