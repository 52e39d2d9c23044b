#pragma once

#include "lotlip/corner_mask.hpp"
#include "lotlip/transformer.hpp"
#include "lotlip/vocabulary.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace lotlip {

struct TextEncoderConfig {
  int vocab_size = 0;
  int limit = 32;
  int corners = 2;
  int depth = 2;
  int width = 64;
  int heads = 4;
  int mlp_ratio = 2;
  int proj_dim = 32;
  MaskMode mask_mode = MaskMode::Corner;

  int mlp_width() const { return mlp_ratio * width; }
  TransformerShape shape() const { return {depth, width, heads, mlp_width()}; }

  void validate() const {
    if (vocab_size < Vocabulary::kFirstCorner + corners) throw Error("vocab_size too small for reserved tokens");
    if (corners < 0) throw Error("corners must be nonnegative");
    if (limit < corners + 2) throw Error("limit too small for corner tokens");
    if (depth < 0 || width < 1 || heads < 1 || mlp_ratio < 0 || proj_dim < 1) throw Error("invalid text encoder shape");
    if (width % heads != 0) throw Error("text width must be divisible by heads");
  }

  bool operator==(const TextEncoderConfig&) const = default;
};

/// Unit-norm global (CLS) feature and one unit-norm feature per corner token.
struct TextFeatures {
  Vector global;
  std::vector<Vector> corners;
};

inline constexpr const char* kTextPrefix = "text.";

/// Exact scalar count of init_text_params. Sums embeddings, blocks, final norm and projection.
inline std::size_t text_param_count(const TextEncoderConfig& c) {
  const auto d = static_cast<std::size_t>(c.width);
  return static_cast<std::size_t>(c.vocab_size) * d + static_cast<std::size_t>(c.limit) * d +
         transformer_param_count(c.shape()) + d * static_cast<std::size_t>(c.proj_dim);
}

/// Corner rows get normal noise plus a per-corner constant so no two start equal.
inline ParameterSet init_text_params(const TextEncoderConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(derive_seed(seed, 0x7e47));
  ParameterSet set;
  constexpr double kEmbedStd = 0.1;
  Matrix& tok = set.add("text.tok_emb", c.vocab_size, c.width, true);
  fill_normal(tok, rng, kEmbedStd);
  // Corner k starts along its own zero-mean cosine direction; a constant shift
  // would be removed by the first layer norm.
  for (int k = 1; k <= c.corners; ++k) {
    for (int j = 0; j < c.width; ++j) {
      tok(Vocabulary::kFirstCorner + k - 1, j) += kEmbedStd * std::cos(std::numbers::pi * k * (j + 0.5) / c.width);
    }
  }
  fill_normal(set.add("text.pos_emb", c.limit, c.width, true), rng, kEmbedStd);
  add_transformer_params(set, kTextPrefix, c.shape(), rng);
  fill_normal(set.add("text.proj", c.width, c.proj_dim, true), rng, 1.0 / std::sqrt(static_cast<double>(c.width)));
  return set;
}

struct TextForward {
  /// B x p, unit rows.
  ad::Var global;
  /// m entries of B x p, unit rows.
  std::vector<ad::Var> corners;
  /// B*L x d final-normalized hidden states; only set when requested.
  ad::Var hidden;
};

struct TextForwardOptions {
  bool want_hidden = false;
  TransformerTrace trace;
};

inline void check_sequence(const TokenSequence& s, const TextEncoderConfig& c) {
  if (s.limit() != c.limit) {
    throw Error("sequence length " + std::to_string(s.limit()) + " != encoder limit " + std::to_string(c.limit));
  }
  if (s.corners != c.corners) {
    throw Error("sequence has " + std::to_string(s.corners) + " corner tokens, encoder expects " +
                std::to_string(c.corners));
  }
  for (TokenId id : s.ids) {
    if (id < 0 || id >= c.vocab_size) throw Error("token id " + std::to_string(id) + " out of vocabulary range");
  }
}

/// Embeddings + positions, masked blocks, final norm on the pooled CLS and corner
/// positions, shared projection, L2 normalization.
inline TextForward text_forward(ad::Tape& tape, const BoundParameters& p, const TextEncoderConfig& c,
                                std::span<const TokenSequence> seqs, const TextForwardOptions& opt = {}) {
  if (seqs.empty()) throw Error("text_forward needs at least one sequence");
  const int B = static_cast<int>(seqs.size());
  const int L = c.limit;
  const int m = c.corners;
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(B) * L);
  ad::AttentionLayout layout{B, L, c.heads, {}};
  layout.masks.reserve(seqs.size());
  for (const auto& s : seqs) {
    check_sequence(s, c);
    ids.insert(ids.end(), s.ids.begin(), s.ids.end());
    layout.masks.push_back(attention_mask(s, c.mask_mode));
  }
  ad::Var x = tape.gather_rows(p["text.tok_emb"], std::move(ids));
  x = tape.add_tiled(x, p["text.pos_emb"]);
  x = transformer_blocks(tape, p, kTextPrefix, c.shape(), x, layout, opt.trace);

  TextForward out;
  if (opt.want_hidden) out.hidden = tape.layer_norm(x, p["text.lnf_g"], p["text.lnf_b"]);
  std::vector<int> pooled_rows;
  pooled_rows.reserve(static_cast<std::size_t>(B) * (m + 1));
  for (int b = 0; b < B; ++b) {
    for (int j = 0; j <= m; ++j) pooled_rows.push_back(b * L + j);
  }
  ad::Var pooled = tape.layer_norm(tape.select_rows(x, std::move(pooled_rows)), p["text.lnf_g"], p["text.lnf_b"]);
  ad::Var feats = tape.l2_normalize_rows(tape.matmul(pooled, p["text.proj"]));
  const auto slot_rows = [&](int j) {
    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) rows.push_back(b * (m + 1) + j);
    return rows;
  };
  out.global = m == 0 ? feats : tape.select_rows(feats, slot_rows(0));
  for (int k = 1; k <= m; ++k) out.corners.push_back(tape.select_rows(feats, slot_rows(k)));
  return out;
}

/// Row-stacked text features: global (B x p) plus m corner matrices.
struct TextFeatureBatch {
  Matrix global;
  std::vector<Matrix> corners;
};

inline TextFeatureBatch encode_text_batch(std::span<const TokenSequence> seqs, const ParameterSet& params,
                                          const TextEncoderConfig& c, std::size_t chunk = 128) {
  TextFeatureBatch out;
  out.global.resize(static_cast<Eigen::Index>(seqs.size()), c.proj_dim);
  out.corners.assign(static_cast<std::size_t>(c.corners), Matrix(static_cast<Eigen::Index>(seqs.size()), c.proj_dim));
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, seqs.size() - start);
    ad::Tape tape;
    BoundParameters p(tape, params, false);
    auto f = text_forward(tape, p, c, seqs.subspan(start, n));
    out.global.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = tape.value(f.global);
    for (int k = 0; k < c.corners; ++k) {
      out.corners[static_cast<std::size_t>(k)].middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
          tape.value(f.corners[static_cast<std::size_t>(k)]);
    }
  }
  return out;
}

inline TextFeatures encode_text(const TokenSequence& seq, const ParameterSet& params, const TextEncoderConfig& c) {
  auto batch = encode_text_batch(std::span<const TokenSequence>(&seq, 1), params, c);
  TextFeatures f;
  f.global = batch.global.row(0).transpose();
  for (const auto& m : batch.corners) f.corners.push_back(m.row(0).transpose());
  return f;
}

/// L x d hidden states after the final norm, before pooling and projection.
inline Matrix text_hidden_states(const TokenSequence& seq, const ParameterSet& params, const TextEncoderConfig& c) {
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  TextForwardOptions opt;
  opt.want_hidden = true;
  auto f = text_forward(tape, p, c, std::span<const TokenSequence>(&seq, 1), opt);
  return tape.value(f.hidden);
}

/// Softmax attention weights of `layer`, one L x L matrix per head.
inline std::vector<Matrix> dump_attention(const TokenSequence& seq, const ParameterSet& params,
                                          const TextEncoderConfig& c, int layer) {
  if (layer < 0 || layer >= c.depth) {
    throw Error("layer " + std::to_string(layer) + " out of range 0.." + std::to_string(c.depth - 1));
  }
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  std::vector<Matrix> probs;
  TextForwardOptions opt;
  opt.trace.capture_layer = layer;
  opt.trace.attention = &probs;
  text_forward(tape, p, c, std::span<const TokenSequence>(&seq, 1), opt);
  return probs;
}

} // namespace lotlip
