#include "ivgae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivgae/errors.hpp"

namespace ivgae {

namespace {

std::string shape_of(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw std::invalid_argument("operands live on different tapes");
  }
}

void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                         shape_of(b.value()));
  }
}

void require_scalar(const char* op, Var s) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionError(std::string(op) + ": expected 1x1 scalar, got " + shape_of(s.value()));
  }
}

// Unary elementwise op whose local derivative is a function of (input, output).
template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape();
  Mat out = a.value().unaryExpr(fwd);
  const std::size_t ia = a.id();
  const std::size_t self = t.size();
  return t.push(op, std::move(out), {a}, [ia, self, deriv](Tape& tp, const Mat& g) {
    const Mat& x = tp.value(ia);
    const Mat& y = tp.value(self);
    Mat local(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) local.data()[i] = deriv(x.data()[i], y.data()[i]);
    tp.accumulate(ia, g.cwiseProduct(local));
  });
}

}  // namespace

Param::Param(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
  grad.setZero(value.rows(), value.cols());
}

const Mat& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw DimensionError("scalar(): node is " + shape_of(v));
  return v(0, 0);
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(const char* op, Mat value, std::initializer_list<Var> parents, BackwardFn backward) {
  return push(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Tape::push(const char* op, Mat value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": non-finite output");
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw std::invalid_argument(std::string(op) + ": parent from another tape");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionError("backward: loss must be 1x1, got " + shape_of(loss.value()));
  }
  accumulate(loss.id(), Mat::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Parents have smaller ids, so this slot is never written again.
      const Mat g = std::move(n.grad);
      n.grad = Mat();
      n.backward(*this, g);
    }
  }
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_of(a.value()) + " x " + shape_of(b.value()));
  }
  Tape& t = *a.tape();
  Mat out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("matmul", std::move(out), {a, b}, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var matmul_transposed(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: shape mismatch " + shape_of(a.value()) + " x " +
                         shape_of(b.value()) + "^T");
  }
  Tape& t = *a.tape();
  Mat out = a.value() * b.value().transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("matmul_transposed", std::move(out), {a, b}, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
  });
}

// ---- elementwise ---------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("add", a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("sub", a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("mul", a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var scale(Var a, double k) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.push("scale", a.value() * k, {a}, [ia, k](Tape& tp, const Mat& g) { tp.accumulate(ia, g * k); });
}

Var scale_by(Var s, Var a) {
  require_same_tape(s, a);
  require_scalar("scale_by", s);
  Tape& t = *a.tape();
  const std::size_t is = s.id(), ia = a.id();
  return t.push("scale_by", a.value() * s.scalar(), {s, a}, [is, ia](Tape& tp, const Mat& g) {
    if (tp.requires_grad(is)) tp.accumulate(is, Mat::Constant(1, 1, g.cwiseProduct(tp.value(ia)).sum()));
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(is)(0, 0));
  });
}

Var add_scalar(Var a, double k) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  Mat out = a.value().array() + k;
  return t.push("add_scalar", std::move(out), {a}, [ia](Tape& tp, const Mat& g) { tp.accumulate(ia, g); });
}

Var add_row(Var a, Var bias) {
  require_same_tape(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError("add_row: shape mismatch " + shape_of(a.value()) + " + row " + shape_of(bias.value()));
  }
  Tape& t = *a.tape();
  Mat out = a.value().rowwise() + bias.value().row(0);
  const std::size_t ia = a.id(), ib = bias.id();
  return t.push("add_row", std::move(out), {a, bias}, [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        // Branch on sign so exp never overflows.
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.push("sum", Mat::Constant(1, 1, a.value().sum()), {a},
                [ia, r, c](Tape& tp, const Mat& g) { tp.accumulate(ia, Mat::Constant(r, c, g(0, 0))); });
}

// ---- structured ops ------------------------------------------------------------

Var l2_normalize_rows(Var m, Var s) {
  require_same_tape(m, s);
  require_scalar("l2_normalize_rows", s);
  if (m.value().size() == 0) throw DimensionError("l2_normalize_rows: empty input");
  Tape& t = *m.tape();
  const Mat& x = m.value();
  Eigen::VectorXd denom = x.rowwise().norm().cwiseMax(kNormEps);
  Mat unit = x.array().colwise() / denom.array();
  Mat out = unit * s.scalar();
  const std::size_t im = m.id(), is = s.id();
  return t.push("l2_normalize_rows", std::move(out), {m, s},
                [im, is, unit = std::move(unit), denom = std::move(denom)](Tape& tp, const Mat& g) {
                  const double sv = tp.value(is)(0, 0);
                  if (tp.requires_grad(is)) tp.accumulate(is, Mat::Constant(1, 1, g.cwiseProduct(unit).sum()));
                  if (!tp.requires_grad(im)) return;
                  Mat dm(g.rows(), g.cols());
                  for (Eigen::Index i = 0; i < g.rows(); ++i) {
                    if (denom(i) > kNormEps) {
                      // Jacobian of x/||x||: (I - u u^T) / ||x||.
                      const double proj = g.row(i).dot(unit.row(i));
                      dm.row(i) = (g.row(i) - proj * unit.row(i)) * (sv / denom(i));
                    } else {
                      dm.row(i) = g.row(i) * (sv / kNormEps);
                    }
                  }
                  tp.accumulate(im, dm);
                });
}

Mat masked_softmax_columns(const Mat& values, const Mat& mask) {
  if (values.rows() != mask.rows() || values.cols() != mask.cols()) {
    throw DimensionError("masked_softmax_columns: shape mismatch " + shape_of(values) + " vs " + shape_of(mask));
  }
  Mat out = Mat::Zero(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (mask(i, j) != 0.0) hi = std::max(hi, values(i, j));
    }
    if (!std::isfinite(hi)) continue;
    double z = 0.0;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (mask(i, j) != 0.0) {
        out(i, j) = std::exp(values(i, j) - hi);
        z += out(i, j);
      }
    }
    out.col(j) /= z;
  }
  return out;
}

Var masked_softmax_columns(Var values, const Mat& mask) {
  Tape& t = *values.tape();
  const std::size_t iv = values.id();
  const std::size_t self = t.size();
  return t.push("masked_softmax_columns", masked_softmax_columns(values.value(), mask), {values},
                [iv, self](Tape& tp, const Mat& g) {
                  const Mat& y = tp.value(self);
                  // dx_ij = y_ij (g_ij - sum_k y_kj g_kj); zero where y is masked out.
                  Eigen::RowVectorXd dots = y.cwiseProduct(g).colwise().sum();
                  Mat dx = y.cwiseProduct(g - dots.replicate(g.rows(), 1));
                  tp.accumulate(iv, dx);
                });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row mismatch " + shape_of(a.value()) + " vs " + shape_of(b.value()));
  }
  Tape& t = *a.tape();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Mat out(a.rows(), ca + cb);
  out.leftCols(ca) = a.value();
  out.rightCols(cb) = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.push("concat_cols", std::move(out), {a, b}, [ia, ib, ca, cb](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.leftCols(ca));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.rightCols(cb));
  });
}

Var mean_stack(std::span<const Var> ms) {
  if (ms.empty()) throw std::invalid_argument("mean_stack: empty list");
  Tape& t = *ms.front().tape();
  Mat acc = ms.front().value();
  for (std::size_t k = 1; k < ms.size(); ++k) {
    require_same_shape("mean_stack", ms.front(), ms[k]);
    acc += ms[k].value();
  }
  const double inv = 1.0 / static_cast<double>(ms.size());
  acc *= inv;
  std::vector<std::size_t> ids;
  ids.reserve(ms.size());
  for (const Var& v : ms) ids.push_back(v.id());
  return t.push("mean_stack", std::move(acc), ms, [ids = std::move(ids), inv](Tape& tp, const Mat& g) {
    const Mat share = g * inv;
    for (std::size_t id : ids) tp.accumulate(id, share);
  });
}

}  // namespace ivgae
