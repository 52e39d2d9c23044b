#pragma once

#include "lotlip/training.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace lotlip {

/// Binary layout: magic "LOTLIPCK", u32 version, u64 header length, JSON header,
/// raw little-endian doubles for every section in header order, u32 CRC-32 of all
/// preceding bytes.
inline constexpr char kCheckpointMagic[8] = {'L', 'O', 'T', 'L', 'I', 'P', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }

template <typename T> void put_scalar(std::string& out, T v) { put_bytes(out, &v, sizeof v); }

inline nlohmann::ordered_json describe(const ParameterSet& set) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : set) arr.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"decay", p.decay}});
  return arr;
}

inline void put_matrices(std::string& out, const ParameterSet& set) {
  for (const auto& p : set) put_bytes(out, p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
}

inline void put_matrices(std::string& out, const GradientSet& set) {
  for (const auto& m : set) put_bytes(out, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

class Reader {
public:
  Reader(const std::string& data, std::size_t end) : data_(data), end_(end) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > end_) throw Error("checkpoint truncated");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }

  template <typename T> T scalar() {
    T v;
    read(&v, sizeof v);
    return v;
  }

  std::string string(std::size_t n) {
    if (pos_ + n > end_) throw Error("checkpoint truncated");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return end_ - pos_; }

private:
  const std::string& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline ParameterSet read_params(Reader& in, const nlohmann::json& desc) {
  ParameterSet set;
  for (const auto& d : desc) {
    Matrix& m = set.add(d.at("name").get<std::string>(), d.at("rows").get<Eigen::Index>(), d.at("cols").get<Eigen::Index>(),
                        d.at("decay").get<bool>());
    in.read(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  return set;
}

inline GradientSet read_like(Reader& in, const ParameterSet& shape) {
  GradientSet g;
  for (const auto& p : shape) {
    Matrix m(p.value.rows(), p.value.cols());
    in.read(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    g.push_back(std::move(m));
  }
  return g;
}

} // namespace detail

inline std::string serialize_checkpoint(const TrainState& s) {
  nlohmann::ordered_json header;
  header["config"] = config_to_json(s.config);
  header["vocab"] = s.model.vocab.tokens();
  header["max_corners"] = s.model.vocab.max_corners();
  header["step"] = s.opt.step;
  header["sections"] = {{"text", detail::describe(s.model.text)},
                        {"image", detail::describe(s.model.image)},
                        {"objective", detail::describe(s.model.objective)}};
  const std::string h = header.dump();
  std::string out;
  detail::put_bytes(out, kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_scalar<std::uint32_t>(out, kCheckpointVersion);
  detail::put_scalar<std::uint64_t>(out, h.size());
  out += h;
  detail::put_matrices(out, s.model.text);
  detail::put_matrices(out, s.model.image);
  detail::put_matrices(out, s.model.objective);
  for (const auto* g : {&s.opt.text_m, &s.opt.text_v, &s.opt.image_m, &s.opt.image_v, &s.opt.objective_m, &s.opt.objective_v}) {
    detail::put_matrices(out, *g);
  }
  const auto crc = static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  detail::put_scalar(out, crc);
  return out;
}

/// Parsed checkpoint header, available without loading parameters.
struct CheckpointInfo {
  std::uint32_t version = 0;
  nlohmann::json header;
};

inline TrainState deserialize_checkpoint(const std::string& bytes, CheckpointInfo* info = nullptr) {
  if (bytes.size() < sizeof kCheckpointMagic + 4 + 8 + 4) throw Error("checkpoint truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) throw Error("not a checkpoint file (bad magic)");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof kCheckpointMagic, sizeof version);
  if (version != kCheckpointVersion) {
    throw Error("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  const auto crc = static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  if (crc != stored) throw Error("checkpoint checksum mismatch (file corrupted)");

  detail::Reader in(bytes, body);
  in.string(sizeof kCheckpointMagic);
  in.scalar<std::uint32_t>();
  const auto header_len = in.scalar<std::uint64_t>();
  const nlohmann::json header = nlohmann::json::parse(in.string(header_len));
  if (info) *info = {version, header};

  TrainState s;
  s.config = config_from_json(header.at("config"));
  s.model.vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>(), header.at("max_corners").get<int>());
  s.model.config = finalize_model_config(s.config.model, s.model.vocab);
  s.config.model = s.model.config;
  const auto& sections = header.at("sections");
  s.model.text = detail::read_params(in, sections.at("text"));
  s.model.image = detail::read_params(in, sections.at("image"));
  s.model.objective = detail::read_params(in, sections.at("objective"));
  s.opt.text_m = detail::read_like(in, s.model.text);
  s.opt.text_v = detail::read_like(in, s.model.text);
  s.opt.image_m = detail::read_like(in, s.model.image);
  s.opt.image_v = detail::read_like(in, s.model.image);
  s.opt.objective_m = detail::read_like(in, s.model.objective);
  s.opt.objective_v = detail::read_like(in, s.model.objective);
  s.opt.step = header.at("step").get<std::uint64_t>();
  if (in.remaining() != 0) throw Error("checkpoint has trailing bytes");
  if (s.model.text.contains("text.tok_emb") && s.model.text["text.tok_emb"].rows() != s.model.config.text.vocab_size) {
    throw Error("checkpoint vocab size mismatch");
  }
  return s;
}

inline void save_checkpoint(const TrainState& s, const std::string& path) {
  const std::string bytes = serialize_checkpoint(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for checkpoint '" + path + "'");
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Throws naming the first model field that differs from `expected`.
inline void check_model_compatible(const ModelConfig& stored, const ModelConfig& expected) {
  RunConfig a, b;
  a.model = stored;
  b.model = expected;
  for (const auto& k : config_keys()) {
    const auto va = k.get(a), vb = k.get(b);
    if (va != vb) {
      throw Error("checkpoint field '" + k.name + "' mismatch: checkpoint has " + va + ", expected " + vb);
    }
  }
}

inline TrainState load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr) {
  TrainState s = deserialize_checkpoint(read_file_bytes(path));
  if (expected) check_model_compatible(s.model.config, *expected);
  return s;
}

} // namespace lotlip
