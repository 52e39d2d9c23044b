#pragma once

#include "lotlip/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lotlip::testing {

/// Small text tower over a synthetic corpus with a trainable precomputed image projection.
inline RunConfig tiny_config(int corners = 2, int depth = 1, int width = 16, int batch = 4) {
  RunConfig c;
  c.model.text.limit = 16;
  c.model.text.corners = corners;
  c.model.text.depth = depth;
  c.model.text.width = width;
  c.model.text.heads = 2;
  c.model.text.mlp_ratio = 2;
  c.model.text.proj_dim = 8;
  c.model.image.input_feature_dim = 6;
  c.model.image.proj_dim = 8;
  c.model.image.frozen = false;
  c.train.batch_size = batch;
  c.train.steps = 20;
  c.train.warmup = 5;
  c.train.k_subcaptions = 2;
  return c;
}

inline SyntheticCorpusOptions tiny_corpus_options(std::size_t n = 16) {
  SyntheticCorpusOptions o;
  o.n = n;
  o.n_attributes = 3;
  o.feature_dim = 6;
  return o;
}

inline Dataset tiny_dataset(const RunConfig& c, std::size_t n = 16) {
  return make_dataset(generate_synthetic_corpus(tiny_corpus_options(n)), c.model.image);
}

/// Visits every parameter scalar of the three groups, trainable ones only.
template <typename F> void for_each_scalar(Model& m, bool include_image, F&& f) {
  std::size_t group = 0;
  for (ParameterSet* set : {&m.text, &m.image, &m.objective}) {
    if (set != &m.image || include_image) {
      for (std::size_t i = 0; i < set->size(); ++i) {
        Matrix& v = set->at(i).value;
        for (Eigen::Index k = 0; k < v.size(); ++k) f(group, i, v.data()[k], k);
      }
    }
    ++group;
  }
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences of the total loss at `samples` uniformly drawn coordinates.
/// Relative error is |g - fd| / max(|g|, |fd|, floor); below the floor the check is
/// absolute, since the difference quotient carries ~1e-10 of rounding noise.
inline GradCheckResult finite_difference_check(Model model, const Batch& batch, std::size_t samples, std::uint64_t seed,
                                               double step = 1e-5, double floor = 1e-4) {
  const Gradients g = compute_gradients(model, batch);
  const bool image = !g.image.empty();
  struct Coord {
    std::size_t group, param;
    Eigen::Index index;
  };
  std::vector<Coord> coords;
  for_each_scalar(model, image, [&](std::size_t group, std::size_t i, double&, Eigen::Index k) { coords.push_back({group, i, k}); });
  Rng rng(seed);
  GradCheckResult r;
  const GradientSet* grads[] = {&g.text, &g.image, &g.objective};
  ParameterSet* sets[] = {&model.text, &model.image, &model.objective};
  for (std::size_t s = 0; s < samples; ++s) {
    const Coord c = coords[rng.uniform_index(coords.size())];
    double& x = sets[c.group]->at(c.param).value.data()[c.index];
    const double saved = x;
    x = saved + step;
    const double up = compute_gradients(model, batch).loss.total;
    x = saved - step;
    const double down = compute_gradients(model, batch).loss.total;
    x = saved;
    const double fd = (up - down) / (2.0 * step);
    const double an = (*grads[c.group])[c.param].data()[c.index];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

} // namespace lotlip::testing

namespace lotlip::testing {

/// 2 x the multiply-accumulates the tape records for one forward pass of one sequence.
inline std::uint64_t instrumented_flops(TextEncoderConfig c) {
  c.vocab_size = Vocabulary::kFirstCorner + Vocabulary::kDefaultMaxCorners + 1;
  c.corners = std::min(c.corners, c.limit - 2);
  const ParameterSet params = init_text_params(c, 1);
  const TokenSequence seq = tokenize("x.", c.limit, c.corners, Vocabulary{});
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  ad::MacCounter counter;
  TextForwardOptions opt;
  opt.trace.counter = &counter;
  text_forward(tape, p, c, std::span<const TokenSequence>(&seq, 1), opt);
  return 2 * counter.macs;
}

} // namespace lotlip::testing
