#pragma once

#include "lotlip/model.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <unordered_set>

namespace lotlip {

/// One optimizer step's worth of tokenized inputs.
struct Batch {
  std::vector<std::size_t> record_indices;
  std::vector<ImageInput> images;
  std::vector<TokenSequence> short_texts;
  /// Empty when the long-text loss is disabled.
  std::vector<TokenSequence> long_texts;
  /// Records whose long text had to fall back to the short text.
  int long_fallbacks = 0;
  /// Index into each record's long_texts that was used (-1 for fallbacks).
  std::vector<int> long_choice;

  std::size_t size() const { return record_indices.size(); }
};

/// `count` distinct indices from [0, n) via Floyd's algorithm, in draw order.
inline std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t count, Rng& rng) {
  if (count > n) throw Error("cannot sample more records than available");
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = n - count; j < n; ++j) {
    const std::size_t t = rng.uniform_index(j + 1);
    const std::size_t pick = seen.count(t) ? j : t;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

inline TokenSequence tokenize_short(const ManifestRecord& r, const ModelConfig& c, const Vocabulary& v) {
  std::string text = r.short_text;
  if (text.empty()) {
    for (const auto& t : r.long_texts) {
      auto subs = split_subcaptions(t);
      if (!subs.empty()) {
        text = subs.front();
        break;
      }
    }
  }
  return tokenize(text, c.text.limit, c.text.corners, v, Segmentation::Single);
}

/// Draws N records for `step`. The stream depends only on (seed, step), so a resumed
/// run sees the same batches as an uninterrupted one.
inline Batch assemble_batch(const Dataset& data, const TrainConfig& tc, const ModelConfig& mc, const Vocabulary& vocab,
                            std::uint64_t step) {
  if (data.size() < static_cast<std::size_t>(tc.batch_size)) {
    throw Error("corpus has " + std::to_string(data.size()) + " records, batch needs " + std::to_string(tc.batch_size));
  }
  Rng rng(derive_seed(tc.seed, 0xba7c0000ULL + step));
  Batch b;
  b.record_indices = sample_distinct(data.size(), static_cast<std::size_t>(tc.batch_size), rng);
  for (std::size_t idx : b.record_indices) {
    const auto& r = data.records[idx];
    b.images.push_back(data.images[idx]);
    b.short_texts.push_back(tokenize_short(r, mc, vocab));
    if (!tc.long_enabled()) continue;
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < r.long_texts.size(); ++i) {
      if (!split_subcaptions(r.long_texts[i]).empty()) usable.push_back(i);
    }
    if (usable.empty()) {
      ++b.long_fallbacks;
      b.long_choice.push_back(-1);
      b.long_texts.push_back(tokenize(r.short_text, mc.text.limit, mc.text.corners, vocab, Segmentation::Subcaptions));
      continue;
    }
    const std::size_t which = usable[rng.uniform_index(usable.size())];
    const auto subs = split_subcaptions(r.long_texts[which]);
    const std::string picked = sample_consecutive(subs, static_cast<std::size_t>(tc.k_subcaptions), rng.next());
    b.long_choice.push_back(static_cast<int>(which));
    b.long_texts.push_back(tokenize(picked, mc.text.limit, mc.text.corners, vocab, Segmentation::Subcaptions));
  }
  return b;
}

/// Gradients of the total loss. `image` is empty when the image tower is frozen.
struct Gradients {
  GradientSet text;
  GradientSet image;
  GradientSet objective;
  LossBreakdown loss;
};

/// Forward + reverse pass through both towers and every loss term.
inline Gradients compute_gradients(const Model& model, const Batch& batch) {
  const auto& mc = model.config;
  const bool train_image = !freeze_flag(mc.image);
  ad::Tape tape;
  BoundParameters text(tape, model.text, true);
  BoundParameters image(tape, model.image, train_image);
  BoundParameters objective(tape, model.objective, true);

  const int N = static_cast<int>(batch.size());
  const bool with_long = !batch.long_texts.empty();
  std::vector<TokenSequence> all = batch.short_texts;
  all.insert(all.end(), batch.long_texts.begin(), batch.long_texts.end());

  ad::Var v = image_forward(tape, image, mc.image, batch.images).global;
  TextForward tf = text_forward(tape, text, mc.text, all);
  ad::Var inv_tau = ad::inverse_temperature(tape, objective);

  const auto rows = [](int from, int count) {
    std::vector<int> r(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) r[static_cast<std::size_t>(i)] = from + i;
    return r;
  };
  const auto check = [&](ad::Var term, const std::string& name) {
    const double x = tape.value(term)(0, 0);
    if (!std::isfinite(x)) throw Error("non-finite loss in term '" + name + "'");
    return x;
  };

  Gradients out;
  ad::Var short_term = ad::bidirectional_nce(tape, v, with_long ? tape.select_rows(tf.global, rows(0, N)) : tf.global, inv_tau);
  out.loss.short_term = check(short_term, "short");
  out.loss.terms = 2;
  ad::Var total = short_term;
  if (with_long) {
    ad::Var long_term = ad::bidirectional_nce(tape, v, tape.select_rows(tf.global, rows(N, N)), inv_tau);
    check(long_term, "long.global");
    for (int k = 0; k < mc.text.corners; ++k) {
      ad::Var corner = tape.select_rows(tf.corners[static_cast<std::size_t>(k)], rows(N, N));
      ad::Var term = ad::bidirectional_nce(tape, v, corner, inv_tau);
      check(term, "long.corner" + std::to_string(k + 1));
      long_term = tape.add(long_term, term);
    }
    out.loss.long_term = tape.value(long_term)(0, 0);
    out.loss.terms += 2 * (1 + mc.text.corners);
    total = tape.add(total, long_term);
  }
  out.loss.total = check(total, "total");
  tape.backward(total);
  out.text = collect_gradients(tape, text, model.text);
  if (train_image) out.image = collect_gradients(tape, image, model.image);
  out.objective = collect_gradients(tape, objective, model.objective);
  return out;
}

/// First/second moment accumulators for every parameter group.
struct OptimizerState {
  GradientSet text_m, text_v, image_m, image_v, objective_m, objective_v;
  std::uint64_t step = 0;

  bool operator==(const OptimizerState&) const = default;
};

inline GradientSet zeros_like(const ParameterSet& set) {
  GradientSet g;
  for (const auto& p : set) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

inline OptimizerState init_optimizer(const Model& m) {
  return {zeros_like(m.text), zeros_like(m.text), zeros_like(m.image), zeros_like(m.image),
          zeros_like(m.objective), zeros_like(m.objective), 0};
}

/// Learning rate for 0-based `step`: linear warmup to `lr`, then constant or cosine to 0.
inline double learning_rate(const TrainConfig& tc, std::uint64_t step) {
  const auto s = static_cast<double>(step);
  if (tc.warmup > 0 && step < static_cast<std::uint64_t>(tc.warmup)) return tc.lr * (s + 1.0) / tc.warmup;
  if (tc.schedule == Schedule::Constant) return tc.lr;
  const double span = std::max(1.0, static_cast<double>(tc.steps - tc.warmup));
  const double progress = std::clamp((s - tc.warmup) / span, 0.0, 1.0);
  return tc.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct StepMetrics {
  std::uint64_t step = 0;
  double loss_total = 0.0;
  double loss_short = 0.0;
  double loss_long = 0.0;
  double loss_mean_per_pair = 0.0;
  double tau = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  int long_fallbacks = 0;
  double seconds = 0.0;
};

/// Deterministic fields only unless `with_timing` is set; wall time differs run to run.
inline nlohmann::ordered_json to_json(const StepMetrics& m, bool with_timing = false) {
  nlohmann::ordered_json j{{"step", m.step},
                           {"loss_total", m.loss_total},
                           {"loss_short", m.loss_short},
                           {"loss_long", m.loss_long},
                           {"loss_mean_per_pair", m.loss_mean_per_pair},
                           {"tau", m.tau},
                           {"grad_norm", m.grad_norm},
                           {"lr", m.lr},
                           {"long_fallbacks", m.long_fallbacks}};
  if (with_timing) j["seconds"] = m.seconds;
  return j;
}

namespace detail {

inline void adamw_update(ParameterSet& params, const GradientSet& grads, GradientSet& m, GradientSet& v,
                         const TrainConfig& tc, double lr, std::uint64_t t) {
  const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    const Matrix& g = grads[i];
    m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * g;
    v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * g.cwiseProduct(g);
    const Matrix update = (m[i] / bc1).array() / ((v[i] / bc2).array().sqrt() + tc.adam_eps);
    if (p.decay && tc.weight_decay > 0.0) p.value -= (lr * tc.weight_decay) * p.value;
    p.value -= lr * update;
  }
}

inline double squared_norm(const GradientSet& g) {
  double s = 0.0;
  for (const auto& m : g) s += m.squaredNorm();
  return s;
}

} // namespace detail

/// One AdamW update with decoupled weight decay. Frozen image parameters are untouched.
inline StepMetrics train_step(Model& model, OptimizerState& opt, const Batch& batch, const TrainConfig& tc) {
  const auto start = std::chrono::steady_clock::now();
  Gradients g = compute_gradients(model, batch);
  const double lr = learning_rate(tc, opt.step);
  const std::uint64_t t = opt.step + 1;
  detail::adamw_update(model.text, g.text, opt.text_m, opt.text_v, tc, lr, t);
  if (!g.image.empty()) detail::adamw_update(model.image, g.image, opt.image_m, opt.image_v, tc, lr, t);
  detail::adamw_update(model.objective, g.objective, opt.objective_m, opt.objective_v, tc, lr, t);

  StepMetrics m;
  m.step = opt.step;
  m.loss_total = g.loss.total;
  m.loss_short = g.loss.short_term;
  m.loss_long = g.loss.long_term;
  m.loss_mean_per_pair = g.loss.total / (static_cast<double>(batch.size()) * g.loss.terms);
  m.tau = current_tau(model.objective);
  m.grad_norm = std::sqrt(detail::squared_norm(g.text) + detail::squared_norm(g.image) + detail::squared_norm(g.objective));
  m.lr = lr;
  m.long_fallbacks = batch.long_fallbacks;
  opt.step = t;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

/// Model, optimizer, and the config they were trained under.
struct TrainState {
  RunConfig config;
  Model model;
  OptimizerState opt;
};

inline TrainState init_training(const RunConfig& config, const Dataset& data, std::span<const std::string> extra_texts = {}) {
  config.train.validate();
  TrainState s;
  s.config = config;
  s.model = init_model(config.model, build_vocabulary(data.records, config.model.max_corners, extra_texts),
                       config.train.seed, config.train.tau_init);
  s.config.model = s.model.config;
  s.opt = init_optimizer(s.model);
  return s;
}

using MetricsSink = std::function<void(const StepMetrics&)>;

/// Trains from the current optimizer step up to `until` (defaults to config.train.steps).
inline void train(TrainState& s, const Dataset& data, const MetricsSink& sink = {}, std::optional<std::uint64_t> until = {}) {
  const std::uint64_t last = until.value_or(static_cast<std::uint64_t>(s.config.train.steps));
  while (s.opt.step < last) {
    Batch b = assemble_batch(data, s.config.train, s.model.config, s.model.vocab, s.opt.step);
    StepMetrics m = train_step(s.model, s.opt, b, s.config.train);
    if (sink) sink(m);
  }
}

} // namespace lotlip
