#pragma once

#include "lotlip/config.hpp"
#include "lotlip/corpus.hpp"
#include "lotlip/objective.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace lotlip {

/// Vocabulary plus the three parameter groups of a dual-encoder model.
struct Model {
  ModelConfig config;
  Vocabulary vocab;
  ParameterSet text;
  ParameterSet image;
  ParameterSet objective;

  bool operator==(const Model&) const = default;
};

/// Fills in derived config fields (vocab size, shared projection width) and checks them.
inline ModelConfig finalize_model_config(ModelConfig c, const Vocabulary& vocab) {
  c.text.vocab_size = static_cast<int>(vocab.size());
  c.image.proj_dim = c.text.proj_dim;
  if (c.text.corners > vocab.max_corners()) {
    throw Error("corners " + std::to_string(c.text.corners) + " exceeds max_corners " + std::to_string(vocab.max_corners()));
  }
  c.text.validate();
  c.image.validate();
  return c;
}

inline Model init_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed, double tau_init = kTauInit) {
  Model m;
  m.config = finalize_model_config(config, vocab);
  m.vocab = std::move(vocab);
  m.text = init_text_params(m.config.text, seed);
  m.image = init_image_params(m.config.image, seed);
  m.objective = init_objective_params(tau_init);
  return m;
}

/// Manifest records with their image inputs resolved.
struct Dataset {
  std::vector<ManifestRecord> records;
  std::vector<ImageInput> images;
  std::vector<std::string> class_names;
  /// Label index per record, -1 when unlabeled.
  std::vector<int> labels;

  std::size_t size() const { return records.size(); }
};

/// Loads pixels or wraps feature vectors. Relative image paths resolve against `base_dir`.
/// Class names are the distinct record labels in first-appearance order unless given.
inline Dataset make_dataset(std::vector<ManifestRecord> records, const ImageEncoderConfig& image,
                            const std::filesystem::path& base_dir = {}, std::vector<std::string> class_names = {}) {
  Dataset d;
  d.images.reserve(records.size());
  for (const auto& r : records) {
    if (image.mode == ImageMode::Precomputed) {
      if (!r.image_feature) throw Error("record '" + r.id + "' has no image_feature (precomputed mode)");
      if (static_cast<int>(r.image_feature->size()) != image.input_feature_dim) {
        throw Error("record '" + r.id + "' image_feature width " + std::to_string(r.image_feature->size()) +
                    " != configured " + std::to_string(image.input_feature_dim));
      }
      d.images.emplace_back(Eigen::Map<const Vector>(r.image_feature->data(), static_cast<Eigen::Index>(r.image_feature->size())));
    } else {
      if (!r.image_path) throw Error("record '" + r.id + "' has no image_path (vit mode)");
      std::filesystem::path p(*r.image_path);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      d.images.emplace_back(read_pnm(p.string()));
    }
  }
  if (class_names.empty()) {
    for (const auto& r : records) {
      if (r.label && std::find(class_names.begin(), class_names.end(), *r.label) == class_names.end()) {
        class_names.push_back(*r.label);
      }
    }
  }
  for (const auto& r : records) {
    int label = -1;
    if (r.label) {
      auto it = std::find(class_names.begin(), class_names.end(), *r.label);
      if (it != class_names.end()) label = static_cast<int>(it - class_names.begin());
    }
    d.labels.push_back(label);
  }
  d.records = std::move(records);
  d.class_names = std::move(class_names);
  return d;
}

inline Vocabulary build_vocabulary(std::span<const ManifestRecord> records, int max_corners = Vocabulary::kDefaultMaxCorners,
                                   std::span<const std::string> extra_texts = {}) {
  auto words = corpus_words(records);
  for (const auto& t : extra_texts) {
    for (auto& w : split_words(t)) words.insert(std::move(w));
  }
  return Vocabulary::from_words(words, max_corners);
}

} // namespace lotlip
