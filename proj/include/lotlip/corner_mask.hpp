#pragma once

#include "lotlip/tokenizer.hpp"

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lotlip {

enum class MaskMode {
  /// CLS and corner tokens ignore each other; nothing but a corner itself reads a corner.
  Corner,
  /// Plain full attention; the learnable tokens behave as register tokens.
  Full,
};

inline const char* to_string(MaskMode m) { return m == MaskMode::Corner ? "corner" : "full"; }

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "corner") return MaskMode::Corner;
  if (s == "full") return MaskMode::Full;
  throw Error("unknown mask mode '" + s + "' (expected corner|full)");
}

/// Square 0/1 attention mask indexed (query, key); 1 means attend.
class MaskMatrix {
public:
  MaskMatrix() = default;
  MaskMatrix(int size, bool fill) : size_(size), entries_(static_cast<std::size_t>(size) * size, fill ? 1 : 0) {}

  int size() const { return size_; }
  bool operator()(int q, int k) const { return entries_[index(q, k)] != 0; }
  void set(int q, int k, bool value) { entries_[index(q, k)] = value ? 1 : 0; }
  std::span<const std::uint8_t> entries() const { return entries_; }

  bool operator==(const MaskMatrix&) const = default;

  MaskMatrix operator&(const MaskMatrix& other) const {
    if (other.size_ != size_) throw Error("mask size mismatch");
    MaskMatrix out(size_, false);
    for (std::size_t i = 0; i < entries_.size(); ++i) out.entries_[i] = entries_[i] & other.entries_[i];
    return out;
  }

private:
  std::size_t index(int q, int k) const { return static_cast<std::size_t>(q) * size_ + k; }

  int size_ = 0;
  std::vector<std::uint8_t> entries_;
};

/// Blocks (q, k) when q != k and either k is a corner, or both q and k are among
/// {CLS, corners}. SEP counts as a text token. PAD is handled by apply_padding.
inline MaskMatrix build_corner_mask(std::span<const Role> roles, MaskMode mode = MaskMode::Corner) {
  validate_layout(roles);
  const int n = static_cast<int>(roles.size());
  MaskMatrix mask(n, true);
  if (mode == MaskMode::Full) return mask;
  const auto is_corner = [&](int i) { return roles[i] == Role::Corner; };
  const auto is_global = [&](int i) { return roles[i] == Role::Cls || roles[i] == Role::Corner; };
  for (int q = 0; q < n; ++q) {
    for (int k = 0; k < n; ++k) {
      if (q != k && (is_corner(k) || (is_global(q) && is_global(k)))) mask.set(q, k, false);
    }
  }
  return mask;
}

/// PAD key columns are zeroed for every query except the PAD position's own diagonal.
inline MaskMatrix apply_padding(const MaskMatrix& mask, std::span<const Role> roles) {
  if (static_cast<int>(roles.size()) != mask.size()) throw Error("mask size does not match role count");
  MaskMatrix out = mask;
  const int n = mask.size();
  for (int k = 0; k < n; ++k) {
    if (roles[k] != Role::Pad) continue;
    for (int q = 0; q < n; ++q) out.set(q, k, q == k);
  }
  return out;
}

inline MaskMatrix attention_mask(const TokenSequence& seq, MaskMode mode) {
  return apply_padding(build_corner_mask(seq.roles, mode), seq.roles);
}

/// Roles [CLS, COR x m, TEXT x (len - 1 - m)] used by the mask debug printer.
inline std::vector<Role> debug_roles(int len, int m) {
  if (len < 1 || m < 0 || m > len - 1) throw Error("need 0 <= corners <= len - 1");
  std::vector<Role> roles(static_cast<std::size_t>(len), Role::Text);
  roles[0] = Role::Cls;
  for (int k = 1; k <= m; ++k) roles[static_cast<std::size_t>(k)] = Role::Corner;
  return roles;
}

/// One line per query row, entries separated by single spaces.
inline void print_mask(std::ostream& out, const MaskMatrix& mask) {
  for (int q = 0; q < mask.size(); ++q) {
    for (int k = 0; k < mask.size(); ++k) {
      if (k) out << ' ';
      out << (mask(q, k) ? '1' : '0');
    }
    out << '\n';
  }
}

} // namespace lotlip
