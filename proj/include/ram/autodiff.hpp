#pragma once

// Define-by-run reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation eagerly: values are available as soon as an
// op returns, so data-dependent control flow (top-k selection, for instance)
// can inspect them before the rest of the graph is built. backward() walks the
// record in reverse and accumulates into the grad of every Parameter reached.

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ram/numerics.hpp"

namespace ram::ad {

/// A trainable tensor. `grad` has the shape of `value` and accumulates across
/// backward passes until zero_grad(); it is accumulation state, so a const
/// Parameter can still receive gradients.
struct Parameter {
  std::string name;
  Matrix value;
  mutable Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// With record=false no backward closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// References p.value without copying; p must outlive the tape and stay
  /// unchanged while the tape is in use.
  Var param(const Parameter& p);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(int id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr ? n.param->value : n.value;
  }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, allocated on first use. Valid during backward.
  Matrix& grad(int id);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to parameters.
  void backward(Var out);

  using Backward = std::function<void(Tape&, int self)>;

  /// Low-level node creation used by the op library.
  Var push(Matrix value, std::span<const Var> inputs, Backward back);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    const Parameter* param = nullptr;
    bool needs_grad = false;
  };
  bool record_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Op library. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a [m x n] + b [1 x n] broadcast over rows.
Var add_row(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

/// Multi-head scaled dot-product attention on pre-projected q, k, v
/// ([T x d] each). Rows are partitioned into independent blocks of the given
/// lengths; attention never crosses a block boundary. `causal` masks future
/// positions within a block.
Var attention(Var q, Var k, Var v, int n_heads, std::span<const int> blocks, bool causal);

/// Row lookup: out[i] = table[ids[i]].
Var gather_rows(Var table, std::span<const int> ids);
Var vstack(std::span<const Var> parts);
Var slice_rows(Var x, Eigen::Index start, Eigen::Index count);

/// [L x d] -> [1 x d]; mean over rows.
Var mean_rows(Var x);
/// Cosine of every row of x [m x d] with r [1 x d] -> [1 x m]. A zero-norm row
/// scores -1 and receives no gradient.
Var row_cosine(Var x, Var r);
/// Cosine of a [1 x d] with each row of b [m x d] -> [1 x m]; zero norms throw.
Var cosine_rows(Var a, Var b);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Mean of the selected entries of x -> [1 x 1].
Var pick_mean(Var x, std::span<const std::pair<int, int>> entries);
Var sum_scalars(std::span<const Var> xs);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace ram::ad
