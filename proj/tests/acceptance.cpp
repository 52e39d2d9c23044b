// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any of them fails.
#include "fixtures.hpp"

#include "lotlip/checkpoint.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace lotlip {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok && o.pass) {
    o.pass = false;
    o.detail = what;
  }
}

// 1 ------------------------------------------------------------------------

std::vector<Role> layout(int m, int text, int pad, std::uint64_t sep_bits) {
  std::vector<Role> roles{Role::Cls};
  roles.insert(roles.end(), static_cast<std::size_t>(m), Role::Corner);
  for (int i = 0; i < text; ++i) roles.push_back((sep_bits >> i) & 1 ? Role::Sep : Role::Text);
  roles.insert(roles.end(), static_cast<std::size_t>(pad), Role::Pad);
  return roles;
}

Outcome mask_oracle() {
  Outcome o;
  std::size_t cells = 0;
  for (int len = 1; len <= 16; ++len) {
    for (int m = 0; m <= 4 && m <= len - 1; ++m) {
      const int text = len - 1 - m;
      // Every SEP/TEXT pattern for short texts, a spread of patterns beyond that.
      const std::uint64_t patterns = text <= 10 ? (1ull << text) : 1024;
      for (std::uint64_t bits = 0; bits < patterns; ++bits) {
        const std::uint64_t sep = text <= 10 ? bits : bits * 0x9E3779B97F4A7C15ull;
        const auto roles = layout(m, text, 0, sep);
        const auto mask = build_corner_mask(roles);
        for (int q = 0; q < len; ++q) {
          for (int k = 0; k < len; ++k) {
            const auto corner = [&](int i) { return roles[static_cast<std::size_t>(i)] == Role::Corner; };
            const auto global = [&](int i) { return corner(i) || roles[static_cast<std::size_t>(i)] == Role::Cls; };
            const bool expect = q == k || !(corner(k) || (global(q) && global(k)));
            require(o, mask(q, k) == expect, "mismatch at L=" + std::to_string(len) + " m=" + std::to_string(m));
            ++cells;
          }
        }
      }
    }
  }
  o.detail = o.pass ? std::to_string(cells) + " cells equal" : o.detail;
  return o;
}

// 2 ------------------------------------------------------------------------

TokenSequence random_sequence(const TextEncoderConfig& c, Rng& rng) {
  Vocabulary v;
  for (int i = 0; i < 20; ++i) v.add_word("w" + std::to_string(i));
  const int words = c.limit - c.corners - 1 - 4 - static_cast<int>(rng.uniform_index(3));
  std::string text;
  for (int i = 0; i < words; ++i) text += "w" + std::to_string(rng.uniform_index(20)) + (rng.uniform_index(4) == 0 ? ". " : " ");
  text += ".";
  return tokenize(text, c.limit, c.corners, v);
}

TextEncoderConfig isolation_config(int depth, MaskMode mode) {
  TextEncoderConfig c;
  c.vocab_size = Vocabulary::kFirstCorner + Vocabulary::kDefaultMaxCorners + 20;
  c.limit = 16;
  c.corners = 2;
  c.depth = depth;
  c.width = 16;
  c.heads = 2;
  c.proj_dim = 8;
  c.mask_mode = mode;
  return c;
}

Outcome corner_isolation() {
  Outcome o;
  Rng rng(2024);
  double worst = 0.0, max_leak = 0.0;
  for (int depth : {1, 2, 4}) {
    for (int instance = 0; instance < 20; ++instance) {
      for (MaskMode mode : {MaskMode::Corner, MaskMode::Full}) {
        const auto c = isolation_config(depth, mode);
        auto p = init_text_params(c, rng.next());
        const auto seq = random_sequence(c, rng);
        const auto before = encode_text(seq, p, c);
        const Matrix h0 = text_hidden_states(seq, p, c);
        for (int k = 0; k < c.corners; ++k) {
          for (int j = 0; j < c.width; ++j) p["text.tok_emb"](Vocabulary::kFirstCorner + k, j) += rng.normal();
        }
        const auto after = encode_text(seq, p, c);
        const Matrix h1 = text_hidden_states(seq, p, c);
        double diff = (before.global - after.global).cwiseAbs().maxCoeff();
        for (int i = 0; i < c.limit; ++i) {
          const Role r = seq.roles[static_cast<std::size_t>(i)];
          if (r == Role::Text || r == Role::Sep) diff = std::max(diff, (h0.row(i) - h1.row(i)).cwiseAbs().maxCoeff());
        }
        if (mode == MaskMode::Corner) {
          worst = std::max(worst, diff);
        } else {
          max_leak = std::max(max_leak, diff);
        }
      }
    }
  }
  require(o, worst <= 1e-12, "corner mode changed by " + std::to_string(worst));
  require(o, max_leak > 1e-6, "full mode did not leak");
  std::ostringstream d;
  d << "corner-mode max change " << worst << ", full-mode max change " << max_leak;
  if (o.pass) o.detail = d.str();
  return o;
}

// 3 ------------------------------------------------------------------------

Outcome closed_form_losses() {
  Outcome o;
  for (int n : {2, 4, 8}) {
    const double nlogn = n * std::log(static_cast<double>(n));
    for (double c : {-0.5, 0.0, 0.8}) {
      const Matrix s = Matrix::Constant(n, n, c);
      for (auto dir : {Direction::ImageToText, Direction::TextToImage}) {
        require(o, std::abs(info_nce(s, 0.07, dir) - nlogn) <= 1e-9, "uniform info_nce N=" + std::to_string(n));
      }
    }
    const Matrix u = Matrix::Ones(n, 4) / 2.0;
    for (int m : {0, 1, 2, 4}) {
      std::vector<Matrix> corners(static_cast<std::size_t>(m), u);
      require(o, std::abs(long_loss(u, u, corners, 0.5) - (1 + m) * 2 * nlogn) <= 1e-9, "uniform long_loss m=" + std::to_string(m));
    }
  }
  // -log(e / (e + 1)) per row and direction, computed without the library.
  const double hand = 4.0 * std::log1p(std::exp(-1.0));
  const Matrix eye = Matrix::Identity(2, 2);
  const double got = short_loss(eye, eye, 1.0);
  require(o, std::abs(hand - 1.253046) <= 1e-5 && std::abs(got - 1.253046) <= 1e-5, "identity short loss " + std::to_string(got));
  if (o.pass) o.detail = "identity N=2 short loss " + std::to_string(got);
  return o;
}

// 4 ------------------------------------------------------------------------

Outcome gradient_check() {
  Outcome o;
  const auto c = testing::tiny_config(2, 1, 16, 4);
  const auto data = testing::tiny_dataset(c);
  const auto state = init_training(c, data);
  const auto batch = assemble_batch(data, c.train, state.model.config, state.model.vocab, 0);
  const auto r = testing::finite_difference_check(state.model, batch, 200, 99);
  require(o, r.checked == 200 && r.max_rel_error < 1e-4, "max relative error " + std::to_string(r.max_rel_error));
  std::ostringstream d;
  d << r.checked << " coordinates, max relative error " << r.max_rel_error;
  if (o.pass) o.detail = d.str();
  return o;
}

// 5 ------------------------------------------------------------------------

double oracle_recall(const Matrix& s, const RetrievalGroundTruth& gt, int k, Direction dir) {
  const bool i2t = dir == Direction::ImageToText;
  const Eigen::Index queries = i2t ? s.rows() : s.cols(), candidates = i2t ? s.cols() : s.rows();
  int hits = 0;
  for (Eigen::Index q = 0; q < queries; ++q) {
    const auto score = [&](Eigen::Index c) { return i2t ? s(q, c) : s(c, q); };
    std::vector<Eigen::Index> order(static_cast<std::size_t>(candidates));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return score(a) > score(b); });
    order.resize(static_cast<std::size_t>(std::min<Eigen::Index>(k, candidates)));
    bool hit = false;
    for (Eigen::Index c : order) {
      hit = hit || (i2t ? gt.text_image[static_cast<std::size_t>(c)] == q : gt.text_image[static_cast<std::size_t>(q)] == c);
    }
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(queries);
}

Outcome retrieval_oracle() {
  Outcome o;
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    RetrievalGroundTruth gt;
    std::size_t images;
    if (t % 2 == 0) {
      images = 2 + rng.uniform_index(19);
      gt = RetrievalGroundTruth::identity(images);
    } else {
      images = 2 + rng.uniform_index(3);
      std::vector<int> owner;
      for (std::size_t i = 0; i < images; ++i) owner.insert(owner.end(), 5, static_cast<int>(i));
      rng.shuffle(owner);
      gt.text_image = owner;
      gt.image_texts.resize(images);
      for (std::size_t j = 0; j < owner.size(); ++j) gt.image_texts[static_cast<std::size_t>(owner[j])].push_back(static_cast<int>(j));
    }
    Matrix s(static_cast<Eigen::Index>(images), static_cast<Eigen::Index>(gt.text_image.size()));
    for (auto& v : s.reshaped()) v = t % 4 < 2 ? static_cast<double>(rng.uniform_index(5)) : rng.normal();
    for (int k : {1, 5, 10}) {
      for (auto dir : {Direction::ImageToText, Direction::TextToImage}) {
        require(o, recall_at_k(s, gt, k, dir) == oracle_recall(s, gt, k, dir), "matrix " + std::to_string(t));
      }
    }
  }
  if (o.pass) o.detail = "100 matrices, k in {1,5,10}, both directions";
  return o;
}

// 6 ------------------------------------------------------------------------

Outcome toy_convergence() {
  Outcome o;
  SyntheticCorpusOptions opt;
  opt.seed = 1;
  opt.n = 256;
  opt.n_attributes = 4;
  const RunConfig c;
  const auto data = make_dataset(generate_synthetic_corpus(opt), c.model.image);
  auto s = init_training(c, data, default_templates());
  train(s, data);
  double long_r1 = std::nan(""), acc = std::nan("");
  for (const auto& r : evaluate_all(data, s.model, default_templates())) {
    if (r.task == "long_retrieval") long_r1 = *r.r1_i2t;
    if (r.acc1) acc = *r.acc1;
  }
  const double chance = 1.0 / static_cast<double>(data.class_names.size());
  require(o, c.train.steps <= 2000, "step budget");
  require(o, long_r1 >= 0.9, "long R@1 " + std::to_string(long_r1));
  require(o, acc >= chance + 0.2, "Acc@1 " + std::to_string(acc));
  std::ostringstream d;
  d << c.train.steps << " steps, train long R@1 " << long_r1 << ", Acc@1 " << acc << " (chance " << chance << ")";
  if (o.pass) o.detail = d.str(); else o.detail += "; " + d.str();
  return o;
}

// 7 ------------------------------------------------------------------------

Outcome long_text_benefit() {
  Outcome o;
  SyntheticCorpusOptions opt;
  opt.seed = 1;
  opt.n = 256;
  opt.n_attributes = 4;
  const RunConfig base;
  auto split = split_manifest(generate_synthetic_corpus(opt), 64);
  const auto train_data = make_dataset(split.train, base.model.image);
  const auto eval_data = make_dataset(split.eval, base.model.image, {}, train_data.class_names);

  struct Arm {
    const char* name;
    bool long_texts;
    int corners;
    double long_r1 = 0.0, short_r1 = 0.0;
  };
  std::vector<Arm> arms{{"long m=2", true, 2}, {"short-only m=0", false, 0}, {"long m=0", true, 0}};
  constexpr int kSeeds = 3;
  for (auto& arm : arms) {
    for (int seed = 1; seed <= kSeeds; ++seed) {
      RunConfig c = base;
      c.train.seed = static_cast<std::uint64_t>(seed);
      c.train.use_long_texts = arm.long_texts;
      c.model.text.corners = arm.corners;
      auto s = init_training(c, train_data, default_templates());
      train(s, train_data);
      for (const auto& r : evaluate_all(eval_data, s.model, default_templates())) {
        if (r.task == "long_retrieval") arm.long_r1 += *r.r1_i2t / kSeeds;
        if (r.task == "short_retrieval") arm.short_r1 += *r.r1_i2t / kSeeds;
      }
    }
  }
  require(o, arms[0].long_r1 > arms[1].long_r1, "long R@1 did not improve over short-only");
  require(o, arms[0].short_r1 >= arms[2].short_r1, "short R@1 below long m=0");
  std::ostringstream d;
  for (const auto& a : arms) d << a.name << ": long R@1 " << a.long_r1 << " short R@1 " << a.short_r1 << "; ";
  d << base.train.steps << " steps each";
  o.detail = o.pass ? d.str() : o.detail + "; " + d.str();
  return o;
}

// 8 ------------------------------------------------------------------------

Outcome flops_estimator() {
  Outcome o;
  for (auto [depth, d, h, L, ratio] : std::vector<std::array<int, 5>>{{1, 8, 2, 4, 4}, {2, 8, 2, 6, 2}, {1, 12, 3, 5, 1},
                                                                     {3, 4, 1, 7, 4}, {2, 16, 4, 9, 3}}) {
    TextEncoderConfig c;
    c.depth = depth;
    c.width = d;
    c.heads = h;
    c.limit = L;
    c.mlp_ratio = ratio;
    c.corners = 1;
    require(o, flops_estimate(c, L) == testing::instrumented_flops(c), "counter mismatch at depth " + std::to_string(depth));
  }
  TextEncoderConfig paper;
  paper.depth = 12;
  paper.width = 512;
  paper.heads = 8;
  paper.mlp_ratio = 4;
  paper.limit = 1024;
  std::ostringstream d;
  d << "5 configs exact; ratios";
  for (int L : {32, 64, 128, 256, 512}) {
    const double r = static_cast<double>(flops_estimate(paper, 2 * L)) / static_cast<double>(flops_estimate(paper, L));
    require(o, r > 2.0 && r < 4.0, "ratio at L=" + std::to_string(L));
    d << ' ' << std::fixed << std::setprecision(3) << r;
  }
  if (o.pass) o.detail = d.str();
  return o;
}

// 9 ------------------------------------------------------------------------

std::vector<std::string> stream(TrainState& s, const Dataset& data, std::optional<std::uint64_t> until = {}) {
  std::vector<std::string> lines;
  train(s, data, [&](const StepMetrics& m) { lines.push_back(to_json(m).dump()); }, until);
  return lines;
}

Outcome determinism_and_resume() {
  Outcome o;
  auto c = testing::tiny_config();
  c.train.steps = 120;
  const auto data = testing::tiny_dataset(c, 24);
  auto a = init_training(c, data), b = init_training(c, data);
  const auto full = stream(a, data);
  require(o, full == stream(b, data), "same seed gave different streams");

  auto first = init_training(c, data);
  const auto head = stream(first, data, 60);
  const auto path = (std::filesystem::temp_directory_path() / "lotlip_acceptance_resume.ckpt").string();
  save_checkpoint(first, path);
  auto resumed = load_checkpoint(path);
  std::filesystem::remove(path);
  const auto tail = stream(resumed, data);
  require(o, head == std::vector<std::string>(full.begin(), full.begin() + 60), "head differs");
  require(o, tail == std::vector<std::string>(full.begin() + 60, full.end()), "resumed tail differs");
  require(o, resumed.model == a.model && resumed.opt == a.opt, "final state differs");
  if (o.pass) o.detail = "120-step streams identical, resume at step 60 exact";
  return o;
}

} // namespace
} // namespace lotlip

int main() {
  using namespace lotlip;
  const std::vector<Criterion> criteria{
      {1, "mask oracle", 1.0, mask_oracle},
      {2, "corner isolation", 10.0, corner_isolation},
      {3, "closed-form losses", 0.0, closed_form_losses},
      {4, "gradient check", 60.0, gradient_check},
      {5, "retrieval oracle", 0.0, retrieval_oracle},
      {6, "toy convergence", 300.0, toy_convergence},
      {7, "long-text benefit", 1200.0, long_text_benefit},
      {8, "flops estimator", 0.0, flops_estimator},
      {9, "determinism and resume", 0.0, determinism_and_resume},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (c.budget_seconds > 0.0 && seconds >= c.budget_seconds) {
      o.pass = false;
      o.detail += "; over the " + std::to_string(static_cast<int>(c.budget_seconds)) + " s budget";
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s [%d] %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), seconds, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
