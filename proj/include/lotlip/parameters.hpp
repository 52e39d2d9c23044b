#pragma once

#include "lotlip/autodiff.hpp"
#include "lotlip/rng.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace lotlip {

struct Parameter {
  std::string name;
  Matrix value;
  /// Whether decoupled weight decay applies (weight matrices and embeddings only).
  bool decay = true;
};

/// Ordered, named collection of parameter matrices. Order is insertion order and
/// defines checkpoint layout and optimizer-state alignment.
class ParameterSet {
public:
  Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool decay) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    index_.emplace(name, items_.size());
    items_.push_back({name, Matrix::Zero(rows, cols), decay});
    return items_.back().value;
  }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Matrix& operator[](const std::string& name) { return items_[index(name)].value; }
  const Matrix& operator[](const std::string& name) const { return items_[index(name)].value; }

  std::size_t size() const { return items_.size(); }
  Parameter& at(std::size_t i) { return items_.at(i); }
  const Parameter& at(std::size_t i) const { return items_.at(i); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  bool operator==(const ParameterSet& other) const {
    if (items_.size() != other.items_.size()) return false;
    for (std::size_t i = 0; i < items_.size(); ++i) {
      const auto& a = items_[i];
      const auto& b = other.items_[i];
      if (a.name != b.name || a.decay != b.decay || a.value.rows() != b.value.rows() ||
          a.value.cols() != b.value.cols() || a.value != b.value) {
        return false;
      }
    }
    return true;
  }

private:
  std::vector<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Tape leaves for one ParameterSet, addressable by name.
class BoundParameters {
public:
  BoundParameters(ad::Tape& tape, const ParameterSet& set, bool trainable) : set_(&set) {
    vars_.reserve(set.size());
    for (const auto& p : set) vars_.push_back(tape.parameter(p.value, trainable));
  }

  ad::Var operator[](const std::string& name) const { return vars_[set_->index(name)]; }
  ad::Var at(std::size_t i) const { return vars_.at(i); }
  std::size_t size() const { return vars_.size(); }

private:
  const ParameterSet* set_;
  std::vector<ad::Var> vars_;
};

/// Per-parameter gradients aligned with a ParameterSet.
using GradientSet = std::vector<Matrix>;

inline GradientSet collect_gradients(const ad::Tape& tape, const BoundParameters& bound, const ParameterSet& set) {
  GradientSet out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Matrix& g = tape.grad(bound.at(i));
    out[i] = g.size() ? g : Matrix::Zero(set.at(i).value.rows(), set.at(i).value.cols());
  }
  return out;
}

inline void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * stddev;
}

} // namespace lotlip
