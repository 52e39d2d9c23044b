#pragma once

#include "lotlip/image_encoder.hpp"
#include "lotlip/objective.hpp"
#include "lotlip/text_encoder.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lotlip {

struct ModelConfig {
  TextEncoderConfig text;
  ImageEncoderConfig image;
  int max_corners = Vocabulary::kDefaultMaxCorners;

  bool operator==(const ModelConfig&) const = default;
};

enum class Schedule { Constant, Cosine };

inline const char* to_string(Schedule s) { return s == Schedule::Constant ? "constant" : "cosine"; }

inline Schedule parse_schedule(const std::string& s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "cosine") return Schedule::Cosine;
  throw Error("unknown schedule '" + s + "' (expected constant|cosine)");
}

struct TrainConfig {
  int batch_size = 32;
  int steps = 600;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int warmup = 50;
  Schedule schedule = Schedule::Cosine;
  std::uint64_t seed = 1;
  /// Consecutive sub-captions per sampled long text; 0 trains on short texts only.
  int k_subcaptions = 4;
  bool use_long_texts = true;
  double tau_init = kTauInit;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  bool long_enabled() const { return use_long_texts && k_subcaptions > 0; }

  void validate() const {
    if (batch_size < 2) throw Error("batch_size must be >= 2");
    if (steps < 0 || warmup < 0 || k_subcaptions < 0) throw Error("steps, warmup, k_subcaptions must be >= 0");
    if (lr < 0.0 || weight_decay < 0.0) throw Error("lr and weight_decay must be >= 0");
    if (!(tau_init > 0.0)) throw Error("tau_init must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

/// Everything a run needs; each field is addressable by a flat key.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T> T parse_number(const std::string& key, const std::string& text) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error("config key '" + key + "': expected a boolean, got '" + text + "'");
}

} // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

/// Applies a named preset. "lit" locks a precomputed-feature image tower;
/// "scratch" trains a pixel transformer from random weights.
inline void apply_preset(RunConfig& c, const std::string& name) {
  if (name == "lit") {
    const auto keep = c.model.image;
    c.model.image = lit_preset();
    c.model.image.input_feature_dim = keep.input_feature_dim;
    c.model.image.proj_dim = c.model.text.proj_dim;
  } else if (name == "scratch") {
    c.model.image = scratch_preset();
    c.model.image.proj_dim = c.model.text.proj_dim;
  } else if (name != "none") {
    throw Error("unknown preset '" + name + "' (expected lit|scratch|none)");
  }
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    const auto int_key = [&k](std::string name, std::string help, auto member) {
      k.push_back({name, std::move(help), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
                   [member, name](RunConfig& c, const std::string& v) { member(c) = detail::parse_number<int>(name, v); }});
    };
    const auto dbl_key = [&k](std::string name, std::string help, auto member) {
      k.push_back({name, std::move(help), [member](const RunConfig& c) { return detail::format_double(member(const_cast<RunConfig&>(c))); },
                   [member, name](RunConfig& c, const std::string& v) { member(c) = detail::parse_number<double>(name, v); }});
    };
    const auto bool_key = [&k](std::string name, std::string help, auto member) {
      k.push_back({name, std::move(help), [member](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
                   [member, name](RunConfig& c, const std::string& v) { member(c) = detail::parse_bool(name, v); }});
    };
    // text tower
    int_key("limit", "text token limit incl. CLS and corners", [](RunConfig& c) -> int& { return c.model.text.limit; });
    int_key("corners", "number of corner tokens m", [](RunConfig& c) -> int& { return c.model.text.corners; });
    int_key("depth", "text transformer layers", [](RunConfig& c) -> int& { return c.model.text.depth; });
    int_key("dim", "text transformer width", [](RunConfig& c) -> int& { return c.model.text.width; });
    int_key("heads", "text attention heads", [](RunConfig& c) -> int& { return c.model.text.heads; });
    int_key("mlp_ratio", "text MLP width / model width", [](RunConfig& c) -> int& { return c.model.text.mlp_ratio; });
    k.push_back({"proj_dim", "shared embedding width p",
                 [](const RunConfig& c) { return std::to_string(c.model.text.proj_dim); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.text.proj_dim = c.model.image.proj_dim = detail::parse_number<int>("proj_dim", v);
                 }});
    k.push_back({"mask_mode", "corner|full attention mask",
                 [](const RunConfig& c) { return std::string(to_string(c.model.text.mask_mode)); },
                 [](RunConfig& c, const std::string& v) { c.model.text.mask_mode = parse_mask_mode(v); }});
    int_key("max_corners", "reserved corner ids in the vocabulary", [](RunConfig& c) -> int& { return c.model.max_corners; });
    // image tower
    k.push_back({"image_mode", "precomputed|vit",
                 [](const RunConfig& c) { return std::string(to_string(c.model.image.mode)); },
                 [](RunConfig& c, const std::string& v) { c.model.image.mode = parse_image_mode(v); }});
    int_key("image_feature_dim", "precomputed image feature width", [](RunConfig& c) -> int& { return c.model.image.input_feature_dim; });
    int_key("image_size", "vit input side length", [](RunConfig& c) -> int& { return c.model.image.image_size; });
    int_key("patch_size", "vit patch side length", [](RunConfig& c) -> int& { return c.model.image.patch_size; });
    int_key("channels", "vit input channels", [](RunConfig& c) -> int& { return c.model.image.channels; });
    int_key("image_depth", "vit layers", [](RunConfig& c) -> int& { return c.model.image.depth; });
    int_key("image_dim", "vit width", [](RunConfig& c) -> int& { return c.model.image.width; });
    int_key("image_heads", "vit attention heads", [](RunConfig& c) -> int& { return c.model.image.heads; });
    int_key("image_mlp_ratio", "vit MLP width / width", [](RunConfig& c) -> int& { return c.model.image.mlp_ratio; });
    bool_key("freeze_image", "lock the image tower", [](RunConfig& c) -> bool& { return c.model.image.frozen; });
    bool_key("image_identity_init", "identity-initialize a square precomputed projection",
             [](RunConfig& c) -> bool& { return c.model.image.identity_init; });
    // training
    int_key("batch_size", "records per step N", [](RunConfig& c) -> int& { return c.train.batch_size; });
    int_key("steps", "optimizer steps", [](RunConfig& c) -> int& { return c.train.steps; });
    dbl_key("lr", "peak learning rate", [](RunConfig& c) -> double& { return c.train.lr; });
    dbl_key("weight_decay", "decoupled weight decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
    int_key("warmup", "linear warmup steps", [](RunConfig& c) -> int& { return c.train.warmup; });
    k.push_back({"schedule", "constant|cosine after warmup",
                 [](const RunConfig& c) { return std::string(to_string(c.train.schedule)); },
                 [](RunConfig& c, const std::string& v) { c.train.schedule = parse_schedule(v); }});
    k.push_back({"seed", "seed for every stochastic choice",
                 [](const RunConfig& c) { return std::to_string(c.train.seed); },
                 [](RunConfig& c, const std::string& v) { c.train.seed = detail::parse_number<std::uint64_t>("seed", v); }});
    int_key("k_subcaptions", "consecutive sub-captions per long text (0 = short only)",
            [](RunConfig& c) -> int& { return c.train.k_subcaptions; });
    bool_key("use_long_texts", "train with the long-text loss", [](RunConfig& c) -> bool& { return c.train.use_long_texts; });
    dbl_key("tau_init", "initial temperature", [](RunConfig& c) -> double& { return c.train.tau_init; });
    dbl_key("beta1", "first-moment decay", [](RunConfig& c) -> double& { return c.train.beta1; });
    dbl_key("beta2", "second-moment decay", [](RunConfig& c) -> double& { return c.train.beta2; });
    dbl_key("adam_eps", "optimizer epsilon", [](RunConfig& c) -> double& { return c.train.adam_eps; });
    return k;
  }();
  return keys;
}

inline const ConfigKey& find_config_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw Error("unknown config key '" + name + "'");
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// `key = value` lines; '#' starts a comment.
inline KeyValues parse_config_text(std::istream& in) {
  KeyValues out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    out.emplace_back(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return out;
}

inline KeyValues read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  return parse_config_text(in);
}

/// Defaults < preset < config file < flags. A preset named by flags wins over one in the file.
inline RunConfig resolve_config(const KeyValues& file, const KeyValues& flags, RunConfig base = {}) {
  std::string preset;
  for (const auto* layer : {&file, &flags}) {
    for (const auto& [k, v] : *layer) {
      if (k == "preset") preset = v;
    }
  }
  if (!preset.empty()) apply_preset(base, preset);
  for (const auto* layer : {&file, &flags}) {
    for (const auto& [k, v] : *layer) {
      if (k != "preset") find_config_key(k).set(base, v);
    }
  }
  return base;
}

inline std::string dump_config(const RunConfig& c) {
  std::ostringstream out;
  for (const auto& k : config_keys()) out << k.name << " = " << k.get(c) << '\n';
  return out.str();
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& k : config_keys()) j[k.name] = k.get(c);
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  for (const auto& [k, v] : j.items()) find_config_key(k).set(c, v.get<std::string>());
  return c;
}

} // namespace lotlip
