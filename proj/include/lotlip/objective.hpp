#pragma once

#include "lotlip/autodiff.hpp"
#include "lotlip/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace lotlip {

enum class Direction { ImageToText, TextToImage };

inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 10.0;
inline constexpr double kTauInit = 0.07;

/// The temperature is tau = exp(-s) for a learnable scalar s, clamped to [0.01, 10].
inline double tau_from_log_param(double s) { return std::clamp(std::exp(-s), kTauMin, kTauMax); }
inline double log_param_from_tau(double tau) { return -std::log(tau); }

inline ParameterSet init_objective_params(double tau_init = kTauInit) {
  if (!(tau_init > 0.0)) throw Error("tau_init must be positive");
  ParameterSet set;
  set.add("objective.log_inv_tau", 1, 1, false)(0, 0) = log_param_from_tau(tau_init);
  return set;
}

inline double current_tau(const ParameterSet& objective) {
  return tau_from_log_param(objective["objective.log_inv_tau"](0, 0));
}

/// S(i, j) = <a_i, b_j> for row-stacked unit vectors.
inline Matrix similarity(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error("similarity width mismatch: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  return a * b.transpose();
}

/// Summed InfoNCE over the diagonal pairing. ImageToText normalizes each row of S
/// (fixed image, candidate texts); TextToImage normalizes each column.
inline double info_nce(const Matrix& s, double tau, Direction dir) {
  if (s.rows() != s.cols()) throw Error("info_nce needs a square similarity matrix");
  if (s.rows() < 2) throw Error("info_nce needs N >= 2");
  if (!(tau > 0.0)) throw Error("info_nce needs tau > 0");
  if (!s.allFinite()) throw Error("info_nce: non-finite similarity entries");
  const Eigen::Index n = s.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVector z = (dir == Direction::ImageToText ? RowVector(s.row(i)) : RowVector(s.col(i).transpose())) / tau;
    const double mx = z.maxCoeff();
    loss += mx + std::log((z.array() - mx).exp().sum()) - z(i);
  }
  return loss;
}

inline double bidirectional_nce(const Matrix& s, double tau) {
  return info_nce(s, tau, Direction::ImageToText) + info_nce(s, tau, Direction::TextToImage);
}

inline double short_loss(const Matrix& images, const Matrix& short_texts, double tau) {
  if (images.rows() != short_texts.rows()) throw Error("short_loss batch size mismatch");
  return bidirectional_nce(similarity(images, short_texts), tau);
}

/// Bidirectional InfoNCE of the images against the global feature and every corner feature.
inline double long_loss(const Matrix& images, const Matrix& global, std::span<const Matrix> corners, double tau,
                        int expected_corners = -1) {
  if (expected_corners >= 0 && static_cast<int>(corners.size()) != expected_corners) {
    throw Error("long_loss: got " + std::to_string(corners.size()) + " corner sets, config expects " +
                std::to_string(expected_corners));
  }
  if (images.rows() != global.rows()) throw Error("long_loss batch size mismatch");
  double loss = bidirectional_nce(similarity(images, global), tau);
  for (const auto& c : corners) {
    if (c.rows() != images.rows()) throw Error("long_loss corner batch size mismatch");
    loss += bidirectional_nce(similarity(images, c), tau);
  }
  return loss;
}

struct FeatureBatch {
  Matrix images;
  Matrix short_global;
  /// Absent long texts leave this empty and skip the long term.
  Matrix long_global;
  std::vector<Matrix> long_corners;

  bool has_long() const { return long_global.size() != 0; }
};

struct LossBreakdown {
  double total = 0.0;
  double short_term = 0.0;
  double long_term = 0.0;
  /// Number of directional InfoNCE terms summed.
  int terms = 0;
};

inline LossBreakdown total_loss(const FeatureBatch& f, double tau) {
  LossBreakdown out;
  out.short_term = short_loss(f.images, f.short_global, tau);
  out.terms = 2;
  if (f.has_long()) {
    out.long_term = long_loss(f.images, f.long_global, f.long_corners, tau);
    out.terms += 2 * (1 + static_cast<int>(f.long_corners.size()));
  }
  out.total = out.long_term + out.short_term;
  return out;
}

namespace ad {

/// Tape version of the summed bidirectional InfoNCE. `inv_tau` is a 1 x 1 node.
inline Var bidirectional_nce(Tape& tape, Var images, Var texts, Var inv_tau) {
  Var logits = tape.mul_scalar(tape.matmul_bt(images, texts), inv_tau);
  return tape.add(tape.diagonal_cross_entropy(logits), tape.diagonal_cross_entropy(tape.transpose(logits)));
}

/// 1 / tau node from the bound objective parameters; clamping matches tau_from_log_param.
inline Var inverse_temperature(Tape& tape, const BoundParameters& objective) {
  return tape.exp_clamped(objective["objective.log_inv_tau"], 1.0 / kTauMax, 1.0 / kTauMin);
}

} // namespace ad

} // namespace lotlip
