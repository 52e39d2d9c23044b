#pragma once

#include "lotlip/parameters.hpp"

#include <cmath>
#include <string>

namespace lotlip {

/// Shape of one stack of pre-normalization transformer blocks.
struct TransformerShape {
  int depth = 2;
  int width = 64;
  int heads = 4;
  int mlp_width = 256;
};

inline std::string block_param(const std::string& prefix, int layer, const char* name) {
  return prefix + "l" + std::to_string(layer) + "." + name;
}

/// Adds per-block weights and a final norm under `prefix`.
inline void add_transformer_params(ParameterSet& set, const std::string& prefix, const TransformerShape& s, Rng& rng) {
  const int d = s.width;
  const double std_in = 1.0 / std::sqrt(static_cast<double>(d));
  const double std_mlp = 1.0 / std::sqrt(static_cast<double>(s.mlp_width));
  for (int l = 0; l < s.depth; ++l) {
    set.add(block_param(prefix, l, "ln1_g"), 1, d, false).setOnes();
    set.add(block_param(prefix, l, "ln1_b"), 1, d, false);
    fill_normal(set.add(block_param(prefix, l, "w_qkv"), d, 3 * d, true), rng, std_in);
    set.add(block_param(prefix, l, "b_qkv"), 1, 3 * d, false);
    // Residual branches start small so the stack begins close to the identity.
    fill_normal(set.add(block_param(prefix, l, "w_o"), d, d, true), rng, std_in / std::sqrt(2.0 * s.depth));
    set.add(block_param(prefix, l, "b_o"), 1, d, false);
    set.add(block_param(prefix, l, "ln2_g"), 1, d, false).setOnes();
    set.add(block_param(prefix, l, "ln2_b"), 1, d, false);
    fill_normal(set.add(block_param(prefix, l, "w_fc1"), d, s.mlp_width, true), rng, std_in);
    set.add(block_param(prefix, l, "b_fc1"), 1, s.mlp_width, false);
    fill_normal(set.add(block_param(prefix, l, "w_fc2"), s.mlp_width, d, true), rng, std_mlp / std::sqrt(2.0 * s.depth));
    set.add(block_param(prefix, l, "b_fc2"), 1, d, false);
  }
  set.add(prefix + "lnf_g", 1, d, false).setOnes();
  set.add(prefix + "lnf_b", 1, d, false);
}

/// Closed-form count of the scalars added by add_transformer_params.
inline std::size_t transformer_param_count(const TransformerShape& s) {
  const std::size_t d = static_cast<std::size_t>(s.width);
  const std::size_t m = static_cast<std::size_t>(s.mlp_width);
  return static_cast<std::size_t>(s.depth) * (4 * d * d + 2 * d * m + 9 * d + m) + 2 * d;
}

/// Observers for one forward pass through the stack.
struct TransformerTrace {
  /// Attention probabilities of this layer are captured when >= 0.
  int capture_layer = -1;
  std::vector<Matrix>* attention = nullptr;
  /// MAC counter attached to the tape while the blocks run.
  ad::MacCounter* counter = nullptr;
};

/// Runs the blocks on stacked sequences `x` (B*L x d). The final norm is not applied.
inline ad::Var transformer_blocks(ad::Tape& tape, const BoundParameters& p, const std::string& prefix,
                                  const TransformerShape& s, ad::Var x, const ad::AttentionLayout& layout,
                                  const TransformerTrace& trace = {}) {
  ad::MacCounter* saved = tape.counter;
  if (trace.counter) tape.counter = trace.counter;
  for (int l = 0; l < s.depth; ++l) {
    const auto w = [&](const char* name) { return p[block_param(prefix, l, name)]; };
    ad::Var h = tape.layer_norm(x, w("ln1_g"), w("ln1_b"));
    ad::Var qkv = tape.add_row(tape.matmul(h, w("w_qkv")), w("b_qkv"));
    std::vector<Matrix>* probs = (trace.attention && trace.capture_layer == l) ? trace.attention : nullptr;
    ad::Var ctx = tape.attention(qkv, layout, probs);
    x = tape.add(x, tape.add_row(tape.matmul(ctx, w("w_o")), w("b_o")));
    ad::Var h2 = tape.layer_norm(x, w("ln2_g"), w("ln2_b"));
    ad::Var f = tape.gelu(tape.add_row(tape.matmul(h2, w("w_fc1")), w("b_fc1")));
    x = tape.add(x, tape.add_row(tape.matmul(f, w("w_fc2")), w("b_fc2")));
  }
  tape.counter = saved;
  return x;
}

} // namespace lotlip
