#pragma once

#include "lotlip/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lotlip {

enum class ImageMode { Vit, Precomputed };

inline const char* to_string(ImageMode m) { return m == ImageMode::Vit ? "vit" : "precomputed"; }

inline ImageMode parse_image_mode(const std::string& s) {
  if (s == "vit") return ImageMode::Vit;
  if (s == "precomputed") return ImageMode::Precomputed;
  throw Error("unknown image mode '" + s + "' (expected vit|precomputed)");
}

struct ImageEncoderConfig {
  ImageMode mode = ImageMode::Precomputed;
  int image_size = 32;
  int patch_size = 8;
  int channels = 3;
  int depth = 2;
  int width = 64;
  int heads = 4;
  int mlp_ratio = 4;
  int input_feature_dim = 32;
  int proj_dim = 32;
  /// Locked tower: image parameters never receive updates.
  bool frozen = true;
  /// Precomputed mode with a square projection starts from the identity.
  bool identity_init = false;

  int patches_per_side() const { return image_size / patch_size; }
  int patch_count() const { return patches_per_side() * patches_per_side(); }
  int patch_dim() const { return channels * patch_size * patch_size; }
  TransformerShape shape() const { return {depth, width, heads, mlp_ratio * width}; }

  void validate() const {
    if (proj_dim < 1) throw Error("image proj_dim must be positive");
    if (mode == ImageMode::Precomputed) {
      if (input_feature_dim < 1) throw Error("input_feature_dim must be positive");
      if (identity_init && input_feature_dim != proj_dim) throw Error("identity_init needs input_feature_dim == proj_dim");
      return;
    }
    if (patch_size < 1 || image_size < patch_size || image_size % patch_size != 0) {
      throw Error("image_size must be divisible by patch_size");
    }
    if (channels < 1 || depth < 0 || width < 1 || heads < 1 || width % heads != 0) throw Error("invalid vit shape");
  }

  bool operator==(const ImageEncoderConfig&) const = default;
};

/// Locked-image-tower preset: precomputed features through a frozen projection.
inline ImageEncoderConfig lit_preset() {
  ImageEncoderConfig c;
  c.mode = ImageMode::Precomputed;
  c.frozen = true;
  return c;
}

/// Both towers trained from random initialization.
inline ImageEncoderConfig scratch_preset() {
  ImageEncoderConfig c;
  c.mode = ImageMode::Vit;
  c.frozen = false;
  return c;
}

/// Whether the image tower is excluded from gradient updates.
inline bool freeze_flag(const ImageEncoderConfig& c) { return c.frozen; }

/// Channel-major pixels in [0, 1].
struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

using ImageInput = std::variant<ImageTensor, Vector>;

/// Reads binary PGM (P5) or PPM (P6) with maxval <= 255.
inline ImageTensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  const int channels = magic == "P6" ? 3 : magic == "P5" ? 1 : 0;
  if (!channels) throw Error("image '" + path + "' is not binary PGM/PPM");
  const auto next_int = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    int v = -1;
    in >> v;
    return v;
  };
  ImageTensor img;
  img.channels = channels;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255) throw Error("bad PNM header in '" + path + "'");
  in.get();
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.width) * img.height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw Error("truncated image '" + path + "'");
  img.data.resize(raw.size());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.data[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] =
            raw[(static_cast<std::size_t>(y) * img.width + x) * channels + c] / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

/// Writes a binary PPM (3 channels) or PGM (1 channel), 8 bits per sample.
inline void write_pnm(const std::string& path, const ImageTensor& img) {
  if (img.channels != 1 && img.channels != 3) throw Error("PNM output needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image '" + path + "'");
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  if (!out) throw Error("failed writing image '" + path + "'");
}

/// Toy picture of an attribute tuple: slot s owns horizontal band s, painted in a
/// colour picked by its value, with a stripe period that also depends on the value.
inline ImageTensor render_attribute_image(std::span<const int> attributes, std::size_t n_values, int size, int channels = 3) {
  if (attributes.empty() || n_values == 0 || size < static_cast<int>(attributes.size())) {
    throw Error("cannot render attribute image");
  }
  ImageTensor img;
  img.channels = channels;
  img.height = img.width = size;
  img.data.assign(static_cast<std::size_t>(channels) * size * size, 0.0);
  const int bands = static_cast<int>(attributes.size());
  for (int y = 0; y < size; ++y) {
    const int s = std::min(bands - 1, y * bands / size);
    const double v = static_cast<double>(attributes[static_cast<std::size_t>(s)]);
    const double hue = v / static_cast<double>(n_values);
    const int period = 2 + attributes[static_cast<std::size_t>(s)] % 4;
    for (int x = 0; x < size; ++x) {
      const double shade = (x / period) % 2 ? 1.0 : 0.6;
      for (int c = 0; c < channels; ++c) {
        const double phase = hue + static_cast<double>(c) / 3.0;
        const double value = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * phase);
        img.data[(static_cast<std::size_t>(c) * size + y) * size + x] = shade * value;
      }
    }
  }
  return img;
}

inline ParameterSet init_image_params(const ImageEncoderConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(derive_seed(seed, 0x1a6e));
  ParameterSet set;
  if (c.mode == ImageMode::Precomputed) {
    Matrix& proj = set.add("image.proj", c.input_feature_dim, c.proj_dim, true);
    if (c.identity_init) {
      proj.setIdentity();
    } else {
      fill_normal(proj, rng, 1.0 / std::sqrt(static_cast<double>(c.input_feature_dim)));
    }
    return set;
  }
  fill_normal(set.add("image.patch_w", c.patch_dim(), c.width, true), rng, 1.0 / std::sqrt(static_cast<double>(c.patch_dim())));
  set.add("image.patch_b", 1, c.width, false);
  fill_normal(set.add("image.cls", 1, c.width, true), rng, 0.1);
  fill_normal(set.add("image.pos_emb", c.patch_count() + 1, c.width, true), rng, 0.1);
  add_transformer_params(set, "image.", c.shape(), rng);
  fill_normal(set.add("image.proj", c.width, c.proj_dim, true), rng, 1.0 / std::sqrt(static_cast<double>(c.width)));
  return set;
}

/// Row p of the result is patch p (row-major over the grid) flattened as (channel, y, x).
inline Matrix patchify(const ImageTensor& img, const ImageEncoderConfig& c) {
  if (img.channels != c.channels || img.height != c.image_size || img.width != c.image_size) {
    throw Error("image shape " + std::to_string(img.channels) + "x" + std::to_string(img.height) + "x" +
                std::to_string(img.width) + " does not match config " + std::to_string(c.channels) + "x" +
                std::to_string(c.image_size) + "x" + std::to_string(c.image_size));
  }
  const int side = c.patches_per_side();
  const int ps = c.patch_size;
  Matrix out(c.patch_count(), c.patch_dim());
  for (int py = 0; py < side; ++py) {
    for (int px = 0; px < side; ++px) {
      const int row = py * side + px;
      int col = 0;
      for (int ch = 0; ch < c.channels; ++ch) {
        for (int y = 0; y < ps; ++y) {
          for (int x = 0; x < ps; ++x) out(row, col++) = img.at(ch, py * ps + y, px * ps + x);
        }
      }
    }
  }
  return out;
}

struct ImageForward {
  /// B x p, unit rows.
  ad::Var global;
  /// B*(P+1) x width after the final norm (vit mode, when requested).
  ad::Var hidden;
};

inline ImageForward image_forward(ad::Tape& tape, const BoundParameters& p, const ImageEncoderConfig& c,
                                  std::span<const ImageInput> inputs, bool want_hidden = false) {
  if (inputs.empty()) throw Error("image_forward needs at least one input");
  const auto B = static_cast<Eigen::Index>(inputs.size());
  ImageForward out;
  if (c.mode == ImageMode::Precomputed) {
    Matrix feats(B, c.input_feature_dim);
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto* v = std::get_if<Vector>(&inputs[static_cast<std::size_t>(b)]);
      if (!v) throw Error("precomputed image mode needs feature vectors");
      if (v->size() != c.input_feature_dim) {
        throw Error("image feature width " + std::to_string(v->size()) + " != configured " +
                    std::to_string(c.input_feature_dim));
      }
      feats.row(b) = v->transpose();
    }
    out.global = tape.l2_normalize_rows(tape.matmul(tape.constant(std::move(feats)), p["image.proj"]));
    return out;
  }
  const int P = c.patch_count();
  Matrix patches(B * P, c.patch_dim());
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto* img = std::get_if<ImageTensor>(&inputs[static_cast<std::size_t>(b)]);
    if (!img) throw Error("vit image mode needs pixel inputs");
    patches.middleRows(b * P, P) = patchify(*img, c);
  }
  ad::Var x = tape.add_row(tape.matmul(tape.constant(std::move(patches)), p["image.patch_w"]), p["image.patch_b"]);
  x = tape.prepend_row_per_group(p["image.cls"], x, P);
  x = tape.add_tiled(x, p["image.pos_emb"]);
  ad::AttentionLayout layout{static_cast<int>(B), P + 1, c.heads, {}};
  x = transformer_blocks(tape, p, "image.", c.shape(), x, layout);
  if (want_hidden) out.hidden = tape.layer_norm(x, p["image.lnf_g"], p["image.lnf_b"]);
  std::vector<int> cls_rows;
  for (Eigen::Index b = 0; b < B; ++b) cls_rows.push_back(static_cast<int>(b) * (P + 1));
  ad::Var pooled = tape.layer_norm(tape.select_rows(x, std::move(cls_rows)), p["image.lnf_g"], p["image.lnf_b"]);
  out.global = tape.l2_normalize_rows(tape.matmul(pooled, p["image.proj"]));
  return out;
}

/// B x p unit image features.
inline Matrix encode_image_batch(std::span<const ImageInput> inputs, const ParameterSet& params,
                                 const ImageEncoderConfig& c, std::size_t chunk = 256) {
  Matrix out(static_cast<Eigen::Index>(inputs.size()), c.proj_dim);
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    const std::size_t n = std::min(chunk, inputs.size() - start);
    ad::Tape tape;
    BoundParameters p(tape, params, false);
    auto f = image_forward(tape, p, c, inputs.subspan(start, n));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = tape.value(f.global);
  }
  return out;
}

inline Vector encode_image(const ImageInput& input, const ParameterSet& params, const ImageEncoderConfig& c) {
  return encode_image_batch(std::span<const ImageInput>(&input, 1), params, c).row(0).transpose();
}

/// (P+1) x width hidden states after the final norm; row 0 is the CLS token.
inline Matrix image_hidden_states(const ImageInput& input, const ParameterSet& params, const ImageEncoderConfig& c) {
  if (c.mode != ImageMode::Vit) throw Error("hidden states exist only in vit mode");
  ad::Tape tape;
  BoundParameters p(tape, params, false);
  auto f = image_forward(tape, p, c, std::span<const ImageInput>(&input, 1), true);
  return tape.value(f.hidden);
}

} // namespace lotlip
