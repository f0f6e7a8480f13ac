#pragma once

// Fixed catalog of differentiable operations. Matrices are rank-2 row-major arrays;
// rank-1 arrays are treated as a single row.

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fym/tensor/array.hpp"
#include "fym/tensor/tape.hpp"

namespace fym::tensor {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap mat(const Array& a) {
  return ConstMatMap(a.ptr(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}
inline MatMap mat(Array& a) {
  return MatMap(a.ptr(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

[[noreturn]] inline void shape_error(const char* op, const Array& a, const Array& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                              shape_string(b.shape()));
}

inline void require_matrix(const char* op, const Array& a) {
  if (a.rank() > 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank <= 2, got " + shape_string(a.shape()));
  }
}

inline Tape& same_tape(const char* op, Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Eigen::Map<const Eigen::ArrayXd> vec(const Array& a) {
  return Eigen::Map<const Eigen::ArrayXd>(a.ptr(), static_cast<Eigen::Index>(a.size()));
}
inline Eigen::Map<Eigen::ArrayXd> vec(Array& a) {
  return Eigen::Map<Eigen::ArrayXd>(a.ptr(), static_cast<Eigen::Index>(a.size()));
}

}  // namespace detail

/// a (n x k) times b (k x m).
inline Var matmul(Var a, Var b) {
  using namespace detail;
  Tape& tape = same_tape("matmul", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Array out = Array::matrix(av.rows(), bv.cols());
  mat(out).noalias() = mat(av) * mat(bv);
  return tape.push(std::move(out), "matmul", {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(a)) mat(t.grad(a)).noalias() += mat(g) * mat(t.value(b)).transpose();
    if (t.needs_grad(b)) mat(t.grad(b)).noalias() += mat(t.value(a)).transpose() * mat(g);
  });
}

/// x (n x in) times weights (in x out), plus an optional bias row (out) broadcast over rows.
inline Var affine(Var x, Var weights, std::optional<Var> bias = std::nullopt) {
  using namespace detail;
  Tape& tape = same_tape("affine", x, weights);
  const Array& xv = x.value();
  const Array& wv = weights.value();
  require_matrix("affine", xv);
  require_matrix("affine", wv);
  if (xv.cols() != wv.rows()) shape_error("affine", xv, wv);
  Array out = Array::matrix(xv.rows(), wv.cols());
  mat(out).noalias() = mat(xv) * mat(wv);
  std::size_t bias_id = 0;
  if (bias) {
    same_tape("affine", x, *bias);
    const Array& bv = bias->value();
    if (bv.size() != wv.cols()) shape_error("affine(bias)", wv, bv);
    mat(out).rowwise() += ConstMatMap(bv.ptr(), 1, static_cast<Eigen::Index>(bv.size())).row(0);
    bias_id = bias->id;
  }
  const bool has_bias = bias.has_value();
  return tape.push(std::move(out), "affine", {x.id, weights.id, has_bias ? bias_id : x.id}, [x = x.id, w = weights.id, bias_id, has_bias](Tape& t, std::size_t self) {
    const Array& g = t.grad(self);
    if (t.needs_grad(x)) mat(t.grad(x)).noalias() += mat(g) * mat(t.value(w)).transpose();
    if (t.needs_grad(w)) mat(t.grad(w)).noalias() += mat(t.value(x)).transpose() * mat(g);
    if (has_bias && t.needs_grad(bias_id)) {
      Array& gb = t.grad(bias_id);
      MatMap(gb.ptr(), 1, static_cast<Eigen::Index>(gb.size())) += mat(g).colwise().sum();
    }
  });
}

namespace detail {

enum class Binary { add, sub, mul };

inline Var binary(const char* name, Binary kind, Var a, Var b) {
  Tape& tape = same_tape(name, a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  const bool a_scalar = av.size() == 1 && bv.size() != 1;
  const bool b_scalar = bv.size() == 1 && av.size() != 1;
  if (!a_scalar && !b_scalar && !av.same_shape(bv)) shape_error(name, av, bv);
  const Array& big = a_scalar ? bv : av;
  Array out(big.shape());
  auto apply = [&](const auto& x, const auto& y) {
    switch (kind) {
      case Binary::add: vec(out) = x + y; break;
      case Binary::sub: vec(out) = x - y; break;
      case Binary::mul: vec(out) = x * y; break;
    }
  };
  if (a_scalar) apply(Eigen::ArrayXd::Constant(bv.size(), av[0]), vec(bv));
  else if (b_scalar) apply(vec(av), Eigen::ArrayXd::Constant(av.size(), bv[0]));
  else apply(vec(av), vec(bv));
  return tape.push(std::move(out), name, {a.id, b.id}, [a = a.id, b = b.id, a_scalar, b_scalar, kind](Tape& t, std::size_t self) {
    const Array& g = t.grad(self);
    auto accumulate = [&](std::size_t target, bool scalar_target, std::size_t other, bool scalar_other, double sign) {
      Array& gt = t.grad(target);
      if (kind != Binary::mul) {
        if (scalar_target) gt[0] += sign * vec(g).sum();
        else vec(gt) += sign * vec(g);
        return;
      }
      const Array& ov = t.value(other);
      if (scalar_target) gt[0] += (vec(g) * vec(ov)).sum();
      else if (scalar_other) vec(gt) += ov[0] * vec(g);
      else vec(gt) += vec(g) * vec(ov);
    };
    if (t.needs_grad(a)) accumulate(a, a_scalar, b, b_scalar, 1.0);
    if (t.needs_grad(b)) accumulate(b, b_scalar, a, a_scalar, kind == Binary::sub ? -1.0 : 1.0);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) { return detail::binary("add", detail::Binary::add, a, b); }
inline Var sub(Var a, Var b) { return detail::binary("sub", detail::Binary::sub, a, b); }
inline Var mul(Var a, Var b) { return detail::binary("mul", detail::Binary::mul, a, b); }

inline Var scale(Var x, double s) {
  if (!std::isfinite(s)) throw std::invalid_argument("scale: non-finite factor");
  Array out = x.value();
  detail::vec(out) *= s;
  return x.tape->push(std::move(out), "scale", {x.id}, [x = x.id, s](Tape& t, std::size_t self) {
    if (t.needs_grad(x)) detail::vec(t.grad(x)) += s * detail::vec(t.grad(self));
  });
}

inline Var silu(Var x) {
  using detail::vec;
  const Array& xv = x.value();
  auto sig = std::make_shared<Eigen::ArrayXd>(1.0 / (1.0 + (-vec(xv)).exp()));
  Array out(xv.shape());
  vec(out) = vec(xv) * *sig;
  return x.tape->push(std::move(out), "silu", {x.id}, [x = x.id, sig](Tape& t, std::size_t self) {
    if (!t.needs_grad(x)) return;
    const auto xa = vec(t.value(x));
    vec(t.grad(x)) += vec(t.grad(self)) * (*sig * (1.0 + xa * (1.0 - *sig)));
  });
}

inline Var tanh(Var x) {
  const Array& xv = x.value();
  Array out = Array::zeros_like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::tanh(xv[i]);
  return x.tape->push(std::move(out), "tanh", {x.id}, [x = x.id](Tape& t, std::size_t self) {
    const Array& g = t.grad(self);
    const Array& y = t.value(self);
    Array& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

namespace detail {

// In-place, numerically stable softmax over each row of a row-major block.
inline void softmax_rows(MatMap m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

// dx = y * (g - sum(g * y)) per row.
inline void softmax_rows_backward(ConstMatMap y, ConstMatMap g, MatMap gx) {
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double dot = y.row(r).dot(g.row(r));
    gx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
  }
}

}  // namespace detail

/// Softmax of a matrix along axis 1 (within each row) or axis 0 (within each column).
inline Var softmax(Var x, int axis = 1) {
  using namespace detail;
  const Array& xv = x.value();
  require_matrix("softmax", xv);
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  Array out = xv;
  if (axis == 1) {
    softmax_rows(mat(out));
  } else {
    RowMat tr = mat(xv).transpose();
    softmax_rows(MatMap(tr.data(), tr.rows(), tr.cols()));
    mat(out) = tr.transpose();
  }
  return x.tape->push(std::move(out), "softmax", {x.id}, [x = x.id, axis](Tape& t, std::size_t self) {
    const Array& y = t.value(self);
    const Array& g = t.grad(self);
    Array& gx = t.grad(x);
    if (axis == 1) {
      softmax_rows_backward(mat(y), mat(g), mat(gx));
    } else {
      RowMat yt = mat(y).transpose();
      RowMat gt = mat(g).transpose();
      RowMat acc = RowMat::Zero(yt.rows(), yt.cols());
      softmax_rows_backward(ConstMatMap(yt.data(), yt.rows(), yt.cols()), ConstMatMap(gt.data(), gt.rows(), gt.cols()),
                            MatMap(acc.data(), acc.rows(), acc.cols()));
      mat(gx) += acc.transpose();
    }
  });
}

/// Scaled dot-product attention: softmax(q k^T / sqrt(d)) v, with q (n x d), k (m x d), v (m x dv).
/// Queries come from one array and keys/values from another.
inline Var attention(Var q, Var k, Var v) {
  using namespace detail;
  Tape& tape = same_tape("attention", q, k);
  same_tape("attention", q, v);
  const Array& qv = q.value();
  const Array& kv = k.value();
  const Array& vv = v.value();
  require_matrix("attention", qv);
  require_matrix("attention", kv);
  require_matrix("attention", vv);
  if (qv.cols() != kv.cols()) shape_error("attention(q,k)", qv, kv);
  if (kv.rows() != vv.rows()) shape_error("attention(k,v)", kv, vv);
  if (kv.rows() == 0) throw std::invalid_argument("attention: no key tokens");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
  auto probs = std::make_shared<RowMat>(mat(qv) * mat(kv).transpose() * inv_sqrt_d);
  softmax_rows(MatMap(probs->data(), probs->rows(), probs->cols()));
  Array out = Array::matrix(qv.rows(), vv.cols());
  mat(out).noalias() = (*probs) * mat(vv);
  return tape.push(std::move(out), "attention", {q.id, k.id, v.id},
                   [q = q.id, k = k.id, v = v.id, probs, inv_sqrt_d](Tape& t, std::size_t self) {
                     const auto g = mat(t.grad(self));
                     if (t.needs_grad(v)) mat(t.grad(v)).noalias() += probs->transpose() * g;
                     if (!t.needs_grad(q) && !t.needs_grad(k)) return;
                     RowMat gp = g * mat(t.value(v)).transpose();
                     RowMat gs = RowMat::Zero(gp.rows(), gp.cols());
                     softmax_rows_backward(ConstMatMap(probs->data(), probs->rows(), probs->cols()),
                                           ConstMatMap(gp.data(), gp.rows(), gp.cols()),
                                           MatMap(gs.data(), gs.rows(), gs.cols()));
                     gs *= inv_sqrt_d;
                     if (t.needs_grad(q)) mat(t.grad(q)).noalias() += gs * mat(t.value(k));
                     if (t.needs_grad(k)) mat(t.grad(k)).noalias() += gs.transpose() * mat(t.value(q));
                   });
}

/// Rows of x selected by index (repeats allowed).
inline Var gather_rows(Var x, std::span<const std::size_t> indices) {
  const Array& xv = x.value();
  detail::require_matrix("gather_rows", xv);
  const std::size_t cols = xv.cols();
  Array out = Array::matrix(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= xv.rows()) {
      throw std::invalid_argument("gather_rows: index " + std::to_string(indices[r]) + " out of range for shape " +
                                  shape_string(xv.shape()));
    }
    std::copy_n(xv.ptr() + indices[r] * cols, cols, out.ptr() + r * cols);
  }
  return x.tape->push(std::move(out), "gather_rows", {x.id},
                      [x = x.id, idx = std::vector<std::size_t>(indices.begin(), indices.end()), cols](Tape& t, std::size_t self) {
                        const Array& g = t.grad(self);
                        Array& gx = t.grad(x);
                        for (std::size_t r = 0; r < idx.size(); ++r) {
                          for (std::size_t c = 0; c < cols; ++c) gx[idx[r] * cols + c] += g[r * cols + c];
                        }
                      });
}

namespace detail {

/// Neumaier-compensated running sum. Loss reductions go through this so that finite
/// differences at h = 1e-5 are not swamped by summation round-off.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = s_ + v;
    c_ += std::abs(s_) >= std::abs(v) ? (s_ - t) + v : (v - t) + s_;
    s_ = t;
  }
  double value() const noexcept { return s_ + c_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace detail

inline Var sum(Var x) {
  detail::CompensatedSum acc;
  for (double v : x.value().data()) acc.add(v);
  const double s = acc.value();
  return x.tape->push(Array::scalar(s), "sum", {x.id}, [x = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(x).data()) v += g;
  });
}

inline Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

/// mean((a - b)^2) over all elements.
inline Var squared_error(Var a, Var b) {
  Tape& tape = detail::same_tape("squared_error", a, b);
  const Array& av = a.value();
  const Array& bv = b.value();
  if (!av.same_shape(bv)) detail::shape_error("squared_error", av, bv);
  const double n = static_cast<double>(av.size());
  detail::CompensatedSum acc;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc.add(d * d);
  }
  return tape.push(Array::scalar(acc.value() / n), "squared_error", {a.id, b.id}, [a = a.id, b = b.id, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    const Array& av = t.value(a);
    const Array& bv = t.value(b);
    const bool need_a = t.needs_grad(a);
    const bool need_b = t.needs_grad(b);
    Array* ga = need_a ? &t.grad(a) : nullptr;
    Array* gb = need_b ? &t.grad(b) : nullptr;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = 2.0 * g * (av[i] - bv[i]) / n;
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

}  // namespace fym::tensor
