#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ivgae {

/// Dense row-major matrix of doubles.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Trainable tensor. `grad` has the shape of `value` and accumulates across
/// every use of the parameter within one backward pass.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  Param() = default;
  Param(std::string name, Mat value);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so parents always
// precede children; backward() walks the list once in reverse. A node only
// keeps its backward closure when some ancestor is a parameter, which makes
// work on constant inputs (e.g. the trade-weight softmax) free at backward time.
class Tape {
 public:
  /// Receives the gradient w.r.t. the node's output and pushes contributions
  /// to its parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var param(Param& p);

  /// Appends an op result. Throws NumericError when `value` is not finite.
  Var push(const char* op, Mat value, std::initializer_list<Var> parents, BackwardFn backward);
  Var push(const char* op, Mat value, std::span<const Var> parents, BackwardFn backward);

  /// Populates gradients of every reachable Param; `loss` must be 1x1.
  void backward(Var loss);

  /// Adds `g` into the gradient slot of node `id` if it tracks gradients.
  void accumulate(std::size_t id, const Mat& g);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- ops -------------------------------------------------------------------
// All operands must live on the same tape. Binary elementwise ops require equal
// shapes; mismatches throw DimensionError naming both shapes.

Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_transposed(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
/// Multiplies every entry of `a` by the 1x1 node `s`.
Var scale_by(Var s, Var a);
Var add_scalar(Var a, double k);
/// Adds the 1 x cols row vector `bias` to every row of `a`.
Var add_row(Var a, Var bias);

Var sigmoid(Var a);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var neg(Var a);
/// Clamps into [lo, hi]; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);

/// Sum of all entries, as a 1x1 node.
Var sum(Var a);

inline constexpr double kNormEps = 1e-12;

/// Row i of the result is s * m_i / max(||m_i||, kNormEps).
Var l2_normalize_rows(Var m, Var s);

/// Column-wise softmax restricted to entries where `mask` is 1. Masked-out
/// entries are exactly 0 and a column with no surviving entries is all zeros.
Var masked_softmax_columns(Var values, const Mat& mask);

Var concat_cols(Var a, Var b);

/// Entrywise mean of equally shaped matrices.
Var mean_stack(std::span<const Var> ms);

/// Non-differentiable forward helpers mirroring the ops above.
Mat masked_softmax_columns(const Mat& values, const Mat& mask);

}  // namespace ivgae
