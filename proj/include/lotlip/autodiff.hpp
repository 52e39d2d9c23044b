#pragma once

#include "lotlip/common.hpp"
#include "lotlip/corner_mask.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

namespace lotlip::ad {

/// Multiply-accumulate counter fed by matrix products while attached to a tape.
struct MacCounter {
  std::uint64_t macs = 0;
};

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Value added to blocked attention logits before the softmax.
inline constexpr double kMaskedLogit = -1e9;

/// Layout of a batch of fixed-length sequences stacked row-wise for attention.
struct AttentionLayout {
  int batch = 0;
  int seq_len = 0;
  int heads = 1;
  /// One mask per sequence, or empty for unmasked attention.
  std::vector<MaskMatrix> masks;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order and `backward` replays them in reverse.
class Tape {
public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  MacCounter* counter = nullptr;

  const Matrix& value(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.external ? *n.external : n.value;
  }

  /// Gradient of the last backward root with respect to `v` (zero sized if unreached).
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  Var constant(Matrix m) { return push(std::move(m), false); }

  /// Leaf referring to caller-owned storage; it must outlive the tape.
  Var parameter(const Matrix& m, bool trainable) {
    Var v = push(Matrix(), trainable);
    nodes_.back().external = &m;
    return v;
  }

  void backward(Var root) {
    const Matrix& r = value(root);
    if (r.rows() != 1 || r.cols() != 1) throw Error("backward root must be a scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    Node& rn = node(root);
    rn.grad = Matrix::Ones(1, 1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(n.grad);
    }
  }

  // ---- linear algebra ----------------------------------------------------

  Var matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw Error("matmul shape mismatch");
    count(static_cast<std::uint64_t>(A.rows()) * A.cols() * B.cols());
    Var out = push(A * B, any(a, b));
    if (requires_grad(out)) {
      set_backward(out, [this, a, b](const Matrix& g) {
        if (requires_grad(a)) accumulate(a, g * value(b).transpose());
        if (requires_grad(b)) accumulate(b, value(a).transpose() * g);
      });
    }
    return out;
  }

  /// a * b^T
  Var matmul_bt(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.cols()) throw Error("matmul_bt shape mismatch");
    count(static_cast<std::uint64_t>(A.rows()) * A.cols() * B.rows());
    Var out = push(A * B.transpose(), any(a, b));
    if (requires_grad(out)) {
      set_backward(out, [this, a, b](const Matrix& g) {
        if (requires_grad(a)) accumulate(a, g * value(b));
        if (requires_grad(b)) accumulate(b, g.transpose() * value(a));
      });
    }
    return out;
  }

  Var transpose(Var a) {
    Var out = push(value(a).transpose(), any(a));
    if (requires_grad(out)) set_backward(out, [this, a](const Matrix& g) { accumulate(a, g.transpose()); });
    return out;
  }

  Var add(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) throw Error("add shape mismatch");
    Var out = push(value(a) + value(b), any(a, b));
    if (requires_grad(out)) {
      set_backward(out, [this, a, b](const Matrix& g) {
        if (requires_grad(a)) accumulate(a, g);
        if (requires_grad(b)) accumulate(b, g);
      });
    }
    return out;
  }

  /// Adds a 1 x n row to every row of `a`.
  Var add_row(Var a, Var row) {
    const Matrix& A = value(a);
    const Matrix& R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) throw Error("add_row shape mismatch");
    Matrix out_value = A.rowwise() + R.row(0);
    Var out = push(std::move(out_value), any(a, row));
    if (requires_grad(out)) {
      set_backward(out, [this, a, row](const Matrix& g) {
        if (requires_grad(a)) accumulate(a, g);
        if (requires_grad(row)) accumulate(row, g.colwise().sum());
      });
    }
    return out;
  }

  /// Adds the (L x n) block `tile` to each consecutive L rows of `a`.
  Var add_tiled(Var a, Var tile) {
    const Matrix& A = value(a);
    const Matrix& T = value(tile);
    const Eigen::Index L = T.rows();
    if (T.cols() != A.cols() || L == 0 || A.rows() % L != 0) throw Error("add_tiled shape mismatch");
    Matrix out_value = A;
    for (Eigen::Index r = 0; r < A.rows(); r += L) out_value.middleRows(r, L) += T;
    Var out = push(std::move(out_value), any(a, tile));
    if (requires_grad(out)) {
      set_backward(out, [this, a, tile, L](const Matrix& g) {
        if (requires_grad(a)) accumulate(a, g);
        if (requires_grad(tile)) {
          Matrix acc = Matrix::Zero(L, g.cols());
          for (Eigen::Index r = 0; r < g.rows(); r += L) acc += g.middleRows(r, L);
          accumulate(tile, acc);
        }
      });
    }
    return out;
  }

  Var scale(Var a, double c) {
    Var out = push(value(a) * c, any(a));
    if (requires_grad(out)) set_backward(out, [this, a, c](const Matrix& g) { accumulate(a, g * c); });
    return out;
  }

  /// Multiplies `a` by the 1 x 1 value `s`.
  Var mul_scalar(Var a, Var s) {
    if (value(s).size() != 1) throw Error("mul_scalar expects a 1x1 scalar");
    Var out = push(value(a) * value(s)(0, 0), any(a, s));
    if (requires_grad(out)) {
      set_backward(out, [this, a, s](const Matrix& g) {
        if (requires_grad(a)) accumulate(a, g * value(s)(0, 0));
        if (requires_grad(s)) accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(value(a)).sum()));
      });
    }
    return out;
  }

  /// exp(a) clamped elementwise to [lo, hi]; clamped entries pass no gradient.
  Var exp_clamped(Var a, double lo, double hi) {
    Matrix raw = value(a).array().exp().matrix();
    Matrix clamped = raw.cwiseMax(lo).cwiseMin(hi);
    Var out = push(clamped, any(a));
    if (requires_grad(out)) {
      set_backward(out, [this, a, raw = std::move(raw), lo, hi](const Matrix& g) {
        Matrix d = raw;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
          if (raw.data()[i] < lo || raw.data()[i] > hi) d.data()[i] = 0.0;
        }
        accumulate(a, g.cwiseProduct(d));
      });
    }
    return out;
  }

  /// Exact (erf-based) GELU.
  Var gelu(Var a) {
    const Matrix& X = value(a);
    Matrix Y(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.size(); ++i) {
      const double x = X.data()[i];
      Y.data()[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    }
    Var out = push(std::move(Y), any(a));
    if (requires_grad(out)) {
      set_backward(out, [this, a](const Matrix& g) {
        const Matrix& X = value(a);
        Matrix d(X.rows(), X.cols());
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (Eigen::Index i = 0; i < X.size(); ++i) {
          const double x = X.data()[i];
          const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
          d.data()[i] = g.data()[i] * (cdf + x * inv_sqrt_2pi * std::exp(-0.5 * x * x));
        }
        accumulate(a, d);
      });
    }
    return out;
  }

  /// Row-wise layer normalization with affine gain and bias (1 x n each).
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& X = value(x);
    const Eigen::Index n = X.cols();
    Matrix xhat(X.rows(), n);
    Vector inv_std(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const double mean = X.row(r).mean();
      const double var = (X.row(r).array() - mean).square().mean();
      inv_std(r) = 1.0 / std::sqrt(var + eps);
      xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
    }
    Matrix Y = (xhat.array().rowwise() * value(gain).row(0).array()).matrix();
    Y.rowwise() += value(bias).row(0);
    Var out = push(std::move(Y), any(x, gain) || requires_grad(bias));
    if (requires_grad(out)) {
      set_backward(out, [this, x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Matrix& g) {
        if (requires_grad(gain)) accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (requires_grad(bias)) accumulate(bias, g.colwise().sum());
        if (requires_grad(x)) {
          const double n = static_cast<double>(g.cols());
          Matrix dxhat = (g.array().rowwise() * value(gain).row(0).array()).matrix();
          Matrix dx(g.rows(), g.cols());
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double mean_d = dxhat.row(r).sum() / n;
            const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / n;
            dx.row(r) = (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx) * inv_std(r);
          }
          accumulate(x, dx);
        }
      });
    }
    return out;
  }

  // ---- indexing ----------------------------------------------------------

  /// Embedding lookup: row i of the result is row ids[i] of `table`.
  Var gather_rows(Var table, std::vector<int> ids) {
    const Matrix& T = value(table);
    Matrix out_value(static_cast<Eigen::Index>(ids.size()), T.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= T.rows()) throw Error("token id " + std::to_string(ids[i]) + " out of vocabulary range");
      out_value.row(static_cast<Eigen::Index>(i)) = T.row(ids[i]);
    }
    Var out = push(std::move(out_value), any(table));
    if (requires_grad(out)) {
      set_backward(out, [this, table, ids = std::move(ids)](const Matrix& g) {
        Matrix acc = Matrix::Zero(value(table).rows(), value(table).cols());
        for (std::size_t i = 0; i < ids.size(); ++i) acc.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
        accumulate(table, acc);
      });
    }
    return out;
  }

  Var select_rows(Var x, std::vector<int> rows) { return gather_rows(x, std::move(rows)); }

  /// Rebuilds [cls; patches_0; cls; patches_1; ...] with `per_group` patch rows per group.
  Var prepend_row_per_group(Var row, Var x, int per_group) {
    const Matrix& R = value(row);
    const Matrix& X = value(x);
    if (R.rows() != 1 || R.cols() != X.cols() || per_group <= 0 || X.rows() % per_group != 0) {
      throw Error("prepend_row_per_group shape mismatch");
    }
    const Eigen::Index groups = X.rows() / per_group;
    Matrix out_value(groups * (per_group + 1), X.cols());
    for (Eigen::Index b = 0; b < groups; ++b) {
      out_value.row(b * (per_group + 1)) = R.row(0);
      out_value.middleRows(b * (per_group + 1) + 1, per_group) = X.middleRows(b * per_group, per_group);
    }
    Var out = push(std::move(out_value), any(row, x));
    if (requires_grad(out)) {
      set_backward(out, [this, row, x, per_group, groups](const Matrix& g) {
        if (requires_grad(row)) {
          Matrix acc = Matrix::Zero(1, g.cols());
          for (Eigen::Index b = 0; b < groups; ++b) acc += g.row(b * (per_group + 1));
          accumulate(row, acc);
        }
        if (requires_grad(x)) {
          Matrix dx(groups * per_group, g.cols());
          for (Eigen::Index b = 0; b < groups; ++b) {
            dx.middleRows(b * per_group, per_group) = g.middleRows(b * (per_group + 1) + 1, per_group);
          }
          accumulate(x, dx);
        }
      });
    }
    return out;
  }

  /// Divides every row by its Euclidean norm.
  Var l2_normalize_rows(Var x) {
    const Matrix& X = value(x);
    Vector norms = X.rowwise().norm();
    for (Eigen::Index r = 0; r < norms.size(); ++r) {
      if (norms(r) == 0.0) throw Error("cannot normalize a zero feature vector");
    }
    Matrix Y = X.array().colwise() / norms.array();
    Var out = push(Y, any(x));
    if (requires_grad(out)) {
      set_backward(out, [this, x, Y = std::move(Y), norms = std::move(norms)](const Matrix& g) {
        Matrix dx(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          dx.row(r) = (g.row(r) - Y.row(r) * Y.row(r).dot(g.row(r))) / norms(r);
        }
        accumulate(x, dx);
      });
    }
    return out;
  }

  // ---- fused blocks ------------------------------------------------------

  /// Multi-head scaled dot-product attention over a fused (B*L x 3d) [Q | K | V]
  /// input; returns the (B*L x d) context. Blocked logits get kMaskedLogit.
  /// When `probs_out` is set it receives the B*heads attention matrices (b-major).
  Var attention(Var qkv, const AttentionLayout& layout, std::vector<Matrix>* probs_out = nullptr) {
    const Matrix& QKV = value(qkv);
    const int B = layout.batch, L = layout.seq_len, H = layout.heads;
    if (QKV.rows() != static_cast<Eigen::Index>(B) * L || QKV.cols() % 3 != 0) throw Error("attention input shape mismatch");
    const Eigen::Index d = QKV.cols() / 3;
    if (d % H != 0) throw Error("attention width not divisible by heads");
    if (!layout.masks.empty() && static_cast<int>(layout.masks.size()) != B) throw Error("attention mask count mismatch");
    const Eigen::Index dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    count(2ull * static_cast<std::uint64_t>(B) * L * L * d);

    auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(B) * H);
    Matrix ctx(QKV.rows(), d);
    for (int b = 0; b < B; ++b) {
      const MaskMatrix* mask = layout.masks.empty() ? nullptr : &layout.masks[static_cast<std::size_t>(b)];
      if (mask && mask->size() != L) throw Error("attention mask size mismatch");
      for (int h = 0; h < H; ++h) {
        const auto Q = QKV.block(static_cast<Eigen::Index>(b) * L, h * dh, L, dh);
        const auto K = QKV.block(static_cast<Eigen::Index>(b) * L, d + h * dh, L, dh);
        const auto V = QKV.block(static_cast<Eigen::Index>(b) * L, 2 * d + h * dh, L, dh);
        Matrix P = (Q * K.transpose()) * scale;
        for (int q = 0; q < L; ++q) {
          if (mask) {
            for (int k = 0; k < L; ++k) {
              if (!(*mask)(q, k)) P(q, k) += kMaskedLogit;
            }
          }
          const double mx = P.row(q).maxCoeff();
          P.row(q) = (P.row(q).array() - mx).exp();
          // Eigen's vectorized exp saturates near the subnormal range instead of reaching 0.
          if (mask) {
            for (int k = 0; k < L; ++k) {
              if (!(*mask)(q, k)) P(q, k) = 0.0;
            }
          }
          P.row(q) /= P.row(q).sum();
        }
        ctx.block(static_cast<Eigen::Index>(b) * L, h * dh, L, dh) = P * V;
        (*probs)[static_cast<std::size_t>(b) * H + h] = std::move(P);
      }
    }
    if (probs_out) *probs_out = *probs;
    Var out = push(std::move(ctx), any(qkv));
    if (requires_grad(out)) {
      set_backward(out, [this, qkv, B, L, H, d, dh, scale, probs](const Matrix& g) {
        const Matrix& QKV = value(qkv);
        Matrix dqkv(QKV.rows(), QKV.cols());
        for (int b = 0; b < B; ++b) {
          const Eigen::Index r0 = static_cast<Eigen::Index>(b) * L;
          for (int h = 0; h < H; ++h) {
            const Matrix& P = (*probs)[static_cast<std::size_t>(b) * H + h];
            const auto Q = QKV.block(r0, h * dh, L, dh);
            const auto K = QKV.block(r0, d + h * dh, L, dh);
            const auto V = QKV.block(r0, 2 * d + h * dh, L, dh);
            const auto G = g.block(r0, h * dh, L, dh);
            Matrix dP = G * V.transpose();
            Vector inner = P.cwiseProduct(dP).rowwise().sum();
            Matrix dZ = P.cwiseProduct(dP.colwise() - inner) * scale;
            dqkv.block(r0, h * dh, L, dh) = dZ * K;
            dqkv.block(r0, d + h * dh, L, dh) = dZ.transpose() * Q;
            dqkv.block(r0, 2 * d + h * dh, L, dh) = P.transpose() * G;
          }
        }
        accumulate(qkv, dqkv);
      });
    }
    return out;
  }

  /// Summed cross-entropy of each row's softmax against its diagonal entry:
  /// sum_i (logsumexp_j z_ij - z_ii). Row maxima are subtracted before exp.
  Var diagonal_cross_entropy(Var logits) {
    const Matrix& Z = value(logits);
    if (Z.rows() != Z.cols() || Z.rows() < 1) throw Error("diagonal_cross_entropy needs a square matrix");
    Matrix P(Z.rows(), Z.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      const double mx = Z.row(i).maxCoeff();
      P.row(i) = (Z.row(i).array() - mx).exp();
      const double sum = P.row(i).sum();
      P.row(i) /= sum;
      loss += mx + std::log(sum) - Z(i, i);
    }
    Var out = push(Matrix::Constant(1, 1, loss), any(logits));
    if (requires_grad(out)) {
      set_backward(out, [this, logits, P = std::move(P)](const Matrix& g) {
        Matrix d = P;
        d.diagonal().array() -= 1.0;
        accumulate(logits, d * g(0, 0));
      });
    }
    return out;
  }

private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(const Matrix&)> backward;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

  bool any(Var a) const { return requires_grad(a); }
  bool any(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

  Var push(Matrix m, bool requires_grad) {
    Node n;
    n.value = std::move(m);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  void set_backward(Var v, std::function<void(const Matrix&)> fn) { node(v).backward = std::move(fn); }

  void accumulate(Var v, const Matrix& g) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  void count(std::uint64_t macs) {
    if (counter) counter->macs += macs;
  }

  std::vector<Node> nodes_;
};

} // namespace lotlip::ad
