#pragma once

#include "lotlip/common.hpp"

#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lotlip {

/// One image paired with a short caption and zero or more long captions.
/// `attributes` and `label` are optional bookkeeping written by the synthetic generator.
struct ManifestRecord {
  std::string id;
  std::optional<std::string> image_path;
  std::optional<std::vector<double>> image_feature;
  std::string short_text;
  std::vector<std::string> long_texts;
  std::vector<int> attributes;
  std::optional<std::string> label;

  bool operator==(const ManifestRecord&) const = default;
};

inline nlohmann::ordered_json to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  if (r.image_path) j["image_path"] = *r.image_path;
  if (r.image_feature) j["image_feature"] = *r.image_feature;
  j["short_text"] = r.short_text;
  j["long_texts"] = r.long_texts;
  if (!r.attributes.empty()) j["attributes"] = r.attributes;
  if (r.label) j["label"] = *r.label;
  return j;
}

/// Parses and validates one record. `feature_dim` = 0 disables the width check.
inline ManifestRecord record_from_json(const nlohmann::json& j, std::size_t feature_dim = 0) {
  if (!j.is_object()) throw Error("manifest record is not an object");
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  if (j.contains("image_path")) r.image_path = j.at("image_path").get<std::string>();
  if (j.contains("image_feature")) r.image_feature = j.at("image_feature").get<std::vector<double>>();
  if (r.image_path && r.image_feature) throw Error("record '" + r.id + "' has both image_path and image_feature");
  if (j.contains("short_text")) r.short_text = j.at("short_text").get<std::string>();
  if (j.contains("long_texts")) r.long_texts = j.at("long_texts").get<std::vector<std::string>>();
  if (j.contains("attributes")) r.attributes = j.at("attributes").get<std::vector<int>>();
  if (j.contains("label")) r.label = j.at("label").get<std::string>();
  bool any_text = !r.short_text.empty();
  for (const auto& t : r.long_texts) any_text = any_text || !t.empty();
  if (!any_text) throw Error("record '" + r.id + "' has no text");
  if (feature_dim && r.image_feature && r.image_feature->size() != feature_dim) {
    throw Error("record '" + r.id + "' image_feature width " + std::to_string(r.image_feature->size()) +
                " != configured " + std::to_string(feature_dim));
  }
  return r;
}

struct ManifestReadResult {
  std::vector<ManifestRecord> records;
  std::size_t skipped = 0;
};

/// Reads line-delimited JSON records. Bad lines are skipped with a warning on `warn`.
inline ManifestReadResult read_manifest(std::istream& in, std::size_t feature_dim = 0,
                                        std::ostream* warn = &std::cerr) {
  ManifestReadResult out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.records.push_back(record_from_json(nlohmann::json::parse(line), feature_dim));
    } catch (const std::exception& e) {
      ++out.skipped;
      if (warn) *warn << "warning: manifest line " << line_no << " skipped: " << e.what() << '\n';
    }
  }
  return out;
}

inline ManifestReadResult read_manifest_file(const std::string& path, std::size_t feature_dim = 0,
                                             std::ostream* warn = &std::cerr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  return read_manifest(in, feature_dim, warn);
}

inline void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline void write_manifest_file(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  write_manifest(out, records);
  if (!out) throw Error("write failed for manifest '" + path + "'");
}

} // namespace lotlip
