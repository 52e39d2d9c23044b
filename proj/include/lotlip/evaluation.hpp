#pragma once

#include "lotlip/training.hpp"

#include <cmath>
#include <optional>

namespace lotlip {

/// Each image owns a set of texts; each text belongs to exactly one image.
struct RetrievalGroundTruth {
  std::vector<std::vector<int>> image_texts;
  std::vector<int> text_image;

  void validate() const {
    if (image_texts.empty() || text_image.empty()) throw Error("empty ground truth");
    std::size_t owned = 0;
    for (std::size_t i = 0; i < image_texts.size(); ++i) {
      for (int t : image_texts[i]) {
        if (t < 0 || static_cast<std::size_t>(t) >= text_image.size() || text_image[static_cast<std::size_t>(t)] != static_cast<int>(i)) {
          throw Error("ground truth is not bidirectionally consistent");
        }
        ++owned;
      }
    }
    if (owned != text_image.size()) throw Error("ground truth texts must each belong to exactly one image");
  }

  /// One text per image, text i paired with image i.
  static RetrievalGroundTruth identity(std::size_t n) {
    RetrievalGroundTruth gt;
    for (std::size_t i = 0; i < n; ++i) {
      gt.image_texts.push_back({static_cast<int>(i)});
      gt.text_image.push_back(static_cast<int>(i));
    }
    return gt;
  }
};

namespace detail {

/// Number of entries that outrank entry `target`: strictly higher score, or equal score at a lower index.
template <typename Row> std::size_t rank_of(const Row& scores, Eigen::Index target) {
  const double s = scores(target);
  std::size_t rank = 0;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (scores(j) > s || (scores(j) == s && j < target)) ++rank;
  }
  return rank;
}

} // namespace detail

/// Recall@k over the image x text similarity matrix. An image is a hit when any of its
/// texts lands in its top k; a text is a hit when its image lands in its top k.
/// Ties rank the lower index first.
inline double recall_at_k(const Matrix& s, const RetrievalGroundTruth& gt, int k, Direction dir) {
  gt.validate();
  if (k < 1) throw Error("recall_at_k needs k >= 1");
  if (s.rows() != static_cast<Eigen::Index>(gt.image_texts.size()) || s.cols() != static_cast<Eigen::Index>(gt.text_image.size())) {
    throw Error("similarity shape does not match ground truth");
  }
  if (!s.allFinite()) throw Error("recall_at_k: non-finite similarity");
  std::size_t hits = 0;
  if (dir == Direction::ImageToText) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const auto row = s.row(i);
      for (int t : gt.image_texts[static_cast<std::size_t>(i)]) {
        if (detail::rank_of(row, t) < static_cast<std::size_t>(k)) {
          ++hits;
          break;
        }
      }
    }
    return static_cast<double>(hits) / static_cast<double>(s.rows());
  }
  for (Eigen::Index t = 0; t < s.cols(); ++t) {
    if (detail::rank_of(s.col(t), gt.text_image[static_cast<std::size_t>(t)]) < static_cast<std::size_t>(k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(s.cols());
}

struct EvalReport {
  std::string task;
  std::optional<double> r1_i2t, r5_i2t, r1_t2i, r5_t2i;
  std::optional<double> acc1;
  std::size_t n_images = 0;
  std::size_t n_texts = 0;

  bool has_nan() const {
    for (const auto& v : {r1_i2t, r5_i2t, r1_t2i, r5_t2i, acc1}) {
      if (v && std::isnan(*v)) return true;
    }
    return false;
  }
};

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j{{"task", r.task}};
  const auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("r1_i2t", r.r1_i2t);
  put("r5_i2t", r.r5_i2t);
  put("r1_t2i", r.r1_t2i);
  put("r5_t2i", r.r5_t2i);
  put("acc1", r.acc1);
  j["n_images"] = r.n_images;
  j["n_texts"] = r.n_texts;
  return j;
}

enum class TextKind {
  Short,
  /// Every long text tokenized whole (truncated at the limit), never sub-sampled.
  LongFull,
};

inline const char* to_string(TextKind k) { return k == TextKind::Short ? "short" : "long"; }

struct EvalEmbeddings {
  Matrix images;
  Matrix texts;
  std::vector<std::string> image_ids;
  std::vector<std::string> text_ids;
  RetrievalGroundTruth gt;
};

/// Unit image features and the global text feature of each text. Parameters are read only.
inline EvalEmbeddings embed_eval_set(const Dataset& data, const Model& model, TextKind kind) {
  const auto& mc = model.config;
  EvalEmbeddings e;
  std::vector<TokenSequence> seqs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    e.image_ids.push_back(r.id);
    e.gt.image_texts.emplace_back();
    const auto add = [&](TokenSequence seq, const std::string& id) {
      e.gt.image_texts.back().push_back(static_cast<int>(seqs.size()));
      e.gt.text_image.push_back(static_cast<int>(i));
      e.text_ids.push_back(id);
      seqs.push_back(std::move(seq));
    };
    if (kind == TextKind::Short) {
      add(tokenize_short(r, mc, model.vocab), r.id + "#short");
    } else {
      for (std::size_t t = 0; t < r.long_texts.size(); ++t) {
        if (r.long_texts[t].empty()) continue;
        add(tokenize(r.long_texts[t], mc.text.limit, mc.text.corners, model.vocab, Segmentation::Subcaptions),
            r.id + "#long" + std::to_string(t));
      }
    }
  }
  if (seqs.empty()) throw Error(std::string("no ") + to_string(kind) + " texts to evaluate");
  e.images = encode_image_batch(data.images, model.image, mc.image);
  e.texts = encode_text_batch(seqs, model.text, mc.text).global;
  return e;
}

inline EvalReport retrieval_report(const EvalEmbeddings& e, const std::string& task) {
  const Matrix s = similarity(e.images, e.texts);
  EvalReport r;
  r.task = task;
  r.r1_i2t = recall_at_k(s, e.gt, 1, Direction::ImageToText);
  r.r5_i2t = recall_at_k(s, e.gt, 5, Direction::ImageToText);
  r.r1_t2i = recall_at_k(s, e.gt, 1, Direction::TextToImage);
  r.r5_t2i = recall_at_k(s, e.gt, 5, Direction::TextToImage);
  r.n_images = static_cast<std::size_t>(e.images.rows());
  r.n_texts = static_cast<std::size_t>(e.texts.rows());
  return r;
}

inline const std::vector<std::string>& default_templates() {
  static const std::vector<std::string> t{"a photo of a {}."};
  return t;
}

inline std::string fill_template(std::string_view tmpl, std::string_view name) {
  std::string out(tmpl);
  if (auto pos = out.find("{}"); pos != std::string::npos) {
    out.replace(pos, 2, name);
  } else {
    out += " ";
    out += name;
  }
  return out;
}

/// Per class: average of unit template embeddings, renormalized.
inline Matrix class_prototypes(std::span<const std::string> class_names, std::span<const std::string> templates,
                               const Model& model) {
  if (class_names.empty()) throw Error("empty class list");
  if (templates.empty()) throw Error("need at least one prompt template");
  const auto& mc = model.config;
  std::vector<TokenSequence> seqs;
  for (const auto& name : class_names) {
    for (const auto& t : templates) {
      seqs.push_back(tokenize(fill_template(t, name), mc.text.limit, mc.text.corners, model.vocab, Segmentation::Single));
    }
  }
  const Matrix feats = encode_text_batch(seqs, model.text, mc.text).global;
  const auto T = static_cast<Eigen::Index>(templates.size());
  Matrix protos(static_cast<Eigen::Index>(class_names.size()), feats.cols());
  for (Eigen::Index c = 0; c < protos.rows(); ++c) {
    RowVector mean = feats.middleRows(c * T, T).colwise().mean();
    protos.row(c) = mean / mean.norm();
  }
  return protos;
}

/// Acc@1 of argmax-cosine predictions; ties go to the lower class index.
/// Images with a negative label are ignored.
inline double classify_with_prototypes(const Matrix& images, const Matrix& prototypes, std::span<const int> labels) {
  if (prototypes.rows() == 0) throw Error("empty class list");
  if (static_cast<std::size_t>(images.rows()) != labels.size()) throw Error("label count mismatch");
  const Matrix s = similarity(images, prototypes);
  std::size_t correct = 0, counted = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0) continue;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < s.cols(); ++c) {
      if (s(i, c) > s(i, best)) best = c;
    }
    ++counted;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  if (!counted) throw Error("no labeled images to classify");
  return static_cast<double>(correct) / static_cast<double>(counted);
}

inline double zero_shot_classify(const Matrix& images, std::span<const int> labels, std::span<const std::string> class_names,
                                 std::span<const std::string> templates, const Model& model) {
  return classify_with_prototypes(images, class_prototypes(class_names, templates, model), labels);
}

inline EvalReport classification_report(const Dataset& data, const Model& model, std::span<const std::string> templates) {
  EvalReport r;
  r.task = "classification";
  const Matrix images = encode_image_batch(data.images, model.image, model.config.image);
  r.acc1 = zero_shot_classify(images, data.labels, data.class_names, templates, model);
  r.n_images = data.size();
  r.n_texts = data.class_names.size() * templates.size();
  return r;
}

/// Long retrieval, short retrieval, and (when labels exist) zero-shot classification.
inline std::vector<EvalReport> evaluate_all(const Dataset& data, const Model& model,
                                            std::span<const std::string> templates = default_templates()) {
  std::vector<EvalReport> out;
  bool any_long = false, any_label = false;
  for (const auto& r : data.records) {
    for (const auto& t : r.long_texts) any_long = any_long || !t.empty();
  }
  for (int l : data.labels) any_label = any_label || l >= 0;
  if (any_long) out.push_back(retrieval_report(embed_eval_set(data, model, TextKind::LongFull), "long_retrieval"));
  out.push_back(retrieval_report(embed_eval_set(data, model, TextKind::Short), "short_retrieval"));
  if (any_label && !data.class_names.empty()) out.push_back(classification_report(data, model, templates));
  return out;
}

/// 2 x (multiply-accumulates) of the text transformer blocks for `effective_len` tokens:
/// per layer 4 L d^2 (QKV + output projection), 2 L^2 d (scores + mixing), 2 L d d_mlp (MLP).
/// Embedding lookups, norms, and the output projection are not counted.
inline std::uint64_t flops_estimate(const TextEncoderConfig& c, int effective_len) {
  if (effective_len < 1 || effective_len > c.limit) throw Error("effective length must be in 1..limit");
  const auto L = static_cast<std::uint64_t>(effective_len);
  const auto d = static_cast<std::uint64_t>(c.width);
  const auto dm = static_cast<std::uint64_t>(c.mlp_width());
  const std::uint64_t macs_per_layer = 4 * L * d * d + 2 * L * L * d + 2 * L * d * dm;
  return 2 * static_cast<std::uint64_t>(c.depth) * macs_per_layer;
}

} // namespace lotlip
