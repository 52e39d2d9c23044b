#pragma once

#include "lotlip/manifest.hpp"
#include "lotlip/rng.hpp"
#include "lotlip/tokenizer.hpp"

#include <cstdio>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lotlip {

struct CorpusStats {
  std::size_t n_images = 0;
  /// Non-empty long texts; the averages below are over these.
  std::size_t n_texts = 0;
  std::size_t n_short_texts = 0;
  std::size_t n_skipped = 0;
  double avg_subcaptions_per_text = 0.0;
  double avg_tokens_per_text = 0.0;

  bool operator==(const CorpusStats&) const = default;
};

/// Long-text statistics. Tokens are words plus one SEP per sub-caption.
inline CorpusStats corpus_stats(std::span<const ManifestRecord> records, std::size_t skipped = 0) {
  CorpusStats s;
  s.n_skipped = skipped;
  s.n_images = records.size();
  std::size_t subcaps = 0;
  std::size_t tokens = 0;
  for (const auto& r : records) {
    if (!r.short_text.empty()) ++s.n_short_texts;
    for (const auto& t : r.long_texts) {
      if (t.empty()) continue;
      ++s.n_texts;
      subcaps += split_subcaptions(t).size();
      tokens += count_text_tokens(t);
    }
  }
  if (s.n_texts) {
    s.avg_subcaptions_per_text = static_cast<double>(subcaps) / static_cast<double>(s.n_texts);
    s.avg_tokens_per_text = static_cast<double>(tokens) / static_cast<double>(s.n_texts);
  }
  return s;
}

inline CorpusStats corpus_stats(std::istream& manifest, std::ostream* warn = &std::cerr) {
  auto read = read_manifest(manifest, 0, warn);
  return corpus_stats(read.records, read.skipped);
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  return {{"n_images", s.n_images},
          {"n_texts", s.n_texts},
          {"n_short_texts", s.n_short_texts},
          {"n_skipped", s.n_skipped},
          {"avg_subcaptions_per_text", s.avg_subcaptions_per_text},
          {"avg_tokens_per_text", s.avg_tokens_per_text}};
}

namespace detail {

struct AttributeSlot {
  const char* frame; // sentence with one "{}" placeholder
  std::vector<const char*> values;
};

inline const std::vector<AttributeSlot>& attribute_slots() {
  static const std::vector<AttributeSlot> slots = {
      {"the object is {}.", {"red", "blue", "green", "yellow", "purple", "orange", "white", "black"}},
      {"it has a {} shape.", {"round", "square", "triangular", "oval", "star", "flat", "tall", "curved"}},
      {"it is made of {}.", {"wood", "metal", "glass", "stone", "paper", "plastic", "wool", "rubber"}},
      {"it rests on the {}.", {"table", "floor", "shelf", "grass", "sand", "snow", "road", "bed"}},
      {"the scene is {}.", {"sunny", "dim", "foggy", "rainy", "bright", "dark", "warm", "cold"}},
      {"its size is {}.", {"tiny", "small", "medium", "large", "huge", "narrow", "wide", "thin"}},
      {"a {} is nearby.", {"cat", "dog", "bird", "child", "lamp", "cup", "book", "plant"}},
      {"the background shows a {}.", {"wall", "forest", "sky", "city", "beach", "kitchen", "garden", "field"}},
  };
  return slots;
}

inline std::string fill(std::string_view frame, std::string_view word) {
  std::string out(frame);
  const auto pos = out.find("{}");
  if (pos != std::string::npos) out.replace(pos, 2, word);
  return out;
}

} // namespace detail

/// Word naming value `value` of attribute slot `slot`.
inline std::string attribute_word(std::size_t slot, std::size_t value) {
  const auto& slots = detail::attribute_slots();
  if (slot < slots.size() && value < slots[slot].values.size()) return slots[slot].values[value];
  return "a" + std::to_string(slot) + "v" + std::to_string(value);
}

inline std::string attribute_sentence(std::size_t slot, std::size_t value) {
  const auto& slots = detail::attribute_slots();
  const std::string frame = slot < slots.size() ? slots[slot].frame : "detail " + std::to_string(slot) + " is {}.";
  return detail::fill(frame, attribute_word(slot, value));
}

inline std::string short_caption(std::size_t salient_value) {
  return "a photo of a " + attribute_word(0, salient_value) + " object.";
}

struct SyntheticCorpusOptions {
  std::uint64_t seed = 1;
  std::size_t n = 256;
  std::size_t n_attributes = 4;
  std::size_t feature_dim = 32;
  /// Values per attribute slot; 0 means "same as n_attributes".
  std::size_t n_values = 0;

  std::size_t values_per_slot() const { return n_values ? n_values : n_attributes; }
};

/// Class names of the salient (first) attribute, in label order.
inline std::vector<std::string> synthetic_class_names(const SyntheticCorpusOptions& opt) {
  std::vector<std::string> names;
  for (std::size_t v = 0; v < opt.values_per_slot(); ++v) names.push_back(attribute_word(0, v));
  return names;
}

/// Unit vectors u[slot * n_values + value] making up every synthetic image feature.
inline std::vector<std::vector<double>> synthetic_attribute_vectors(const SyntheticCorpusOptions& opt) {
  Rng rng(derive_seed(opt.seed, 1));
  std::vector<std::vector<double>> vecs(opt.n_attributes * opt.values_per_slot());
  for (auto& v : vecs) {
    double norm2 = 0.0;
    v.resize(opt.feature_dim);
    for (auto& x : v) {
      x = rng.normal();
      norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
  }
  return vecs;
}

/// Deterministic toy corpus. Each record holds one latent value per attribute slot;
/// the image feature is the normalized sum of the matching attribute vectors, the
/// short text names the salient (first) attribute only, and the single long text
/// carries one sentence per attribute.
inline std::vector<ManifestRecord> generate_synthetic_corpus(const SyntheticCorpusOptions& opt) {
  if (opt.n < 2) throw Error("synthetic corpus needs n >= 2");
  if (opt.n_attributes < 2) throw Error("synthetic corpus needs n_attributes >= 2");
  if (opt.feature_dim < 1) throw Error("synthetic corpus needs feature_dim >= 1");
  const std::size_t values = opt.values_per_slot();
  if (values < 2) throw Error("synthetic corpus needs at least 2 values per attribute");

  // Number of distinct tuples, saturated at a bound large enough to never enumerate.
  constexpr std::size_t kEnumerateBound = 1u << 22;
  std::size_t combos = 1;
  for (std::size_t s = 0; s < opt.n_attributes && combos <= kEnumerateBound; ++s) combos *= values;

  Rng rng(derive_seed(opt.seed, 2));
  std::vector<std::vector<int>> tuples;
  const auto decode = [&](std::size_t code) {
    std::vector<int> t(opt.n_attributes);
    for (std::size_t s = 0; s < opt.n_attributes; ++s) {
      t[s] = static_cast<int>(code % values);
      code /= values;
    }
    return t;
  };
  const auto random_tuple = [&] {
    std::vector<int> t(opt.n_attributes);
    for (auto& x : t) x = static_cast<int>(rng.uniform_index(values));
    return t;
  };
  if (combos <= kEnumerateBound && opt.n <= combos) {
    std::vector<std::size_t> codes(combos);
    for (std::size_t i = 0; i < combos; ++i) codes[i] = i;
    for (std::size_t i = 0; i < opt.n; ++i) std::swap(codes[i], codes[i + rng.uniform_index(combos - i)]);
    for (std::size_t i = 0; i < opt.n; ++i) tuples.push_back(decode(codes[i]));
  } else if (combos > kEnumerateBound) {
    std::set<std::vector<int>> seen;
    while (tuples.size() < opt.n) {
      auto t = random_tuple();
      if (seen.insert(t).second) tuples.push_back(std::move(t));
    }
  } else {
    // More records than distinct tuples: repeats are unavoidable.
    for (std::size_t i = 0; i < opt.n; ++i) tuples.push_back(random_tuple());
  }

  const auto vecs = synthetic_attribute_vectors(opt);
  std::vector<ManifestRecord> records;
  records.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    const auto& t = tuples[i];
    ManifestRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    r.id = id;
    std::vector<double> feature(opt.feature_dim, 0.0);
    std::vector<std::string> sentences;
    for (std::size_t s = 0; s < opt.n_attributes; ++s) {
      const auto& u = vecs[s * values + static_cast<std::size_t>(t[s])];
      for (std::size_t d = 0; d < opt.feature_dim; ++d) feature[d] += u[d];
      sentences.push_back(attribute_sentence(s, static_cast<std::size_t>(t[s])));
    }
    double norm2 = 0.0;
    for (double x : feature) norm2 += x * x;
    const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
    for (double& x : feature) x *= inv;
    r.image_feature = std::move(feature);
    r.short_text = short_caption(static_cast<std::size_t>(t[0]));
    r.long_texts = {join(sentences)};
    r.attributes = t;
    r.label = attribute_word(0, static_cast<std::size_t>(t[0]));
    records.push_back(std::move(r));
  }
  return records;
}

/// All distinct words across short and long texts.
inline std::set<std::string> corpus_words(std::span<const ManifestRecord> records) {
  std::set<std::string> words;
  const auto add = [&](const std::string& text) {
    for (auto& w : split_words(text)) words.insert(std::move(w));
  };
  for (const auto& r : records) {
    add(r.short_text);
    for (const auto& t : r.long_texts) add(t);
  }
  return words;
}

struct ManifestSplit {
  std::vector<ManifestRecord> train;
  std::vector<ManifestRecord> eval;
};

/// Deterministic split: the final `n_eval` records form the evaluation split.
inline ManifestSplit split_manifest(std::span<const ManifestRecord> records, std::size_t n_eval) {
  if (n_eval > records.size()) throw Error("eval split larger than manifest");
  ManifestSplit s;
  const std::size_t n_train = records.size() - n_eval;
  s.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.eval.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train), records.end());
  return s;
}

} // namespace lotlip
