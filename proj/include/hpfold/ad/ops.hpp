#pragma once

// Differentiable free functions over BasicVar. Broadcasting is limited to
// scalar-with-matrix in add/sub/mul; bias rows and column scalings have their
// own named ops so shape intent stays explicit.

#include "hpfold/ad/tape.hpp"

#include <Eigen/SparseCore>

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

namespace hpfold::ad {

namespace detail {

inline std::string shape_str(Index r, Index c) {
  std::ostringstream os;
  os << '(' << r << 'x' << c << ')';
  return os.str();
}

template <typename S>
void require_same_shape(const char* op, const BasicVar<S>& a, const BasicVar<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                                " vs " + shape_str(b.rows(), b.cols()));
}

template <typename S>
bool is_scalar(const BasicVar<S>& v) {
  return v.rows() == 1 && v.cols() == 1;
}

}  // namespace detail

// (m,k) x (k,n). A stack of t row-blocks (t*m, k) multiplies each block by the
// same right operand, which covers the batched (t,m,k) x (k,n) case.
template <typename S>
BasicVar<S> matmul(BasicVar<S> a, BasicVar<S> b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ " +
                                detail::shape_str(a.rows(), a.cols()) + " x " +
                                detail::shape_str(b.rows(), b.cols()));
  Matrix<S> out = a.value() * b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, const Matrix<S>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

template <typename S>
BasicVar<S> transpose(BasicVar<S> a) {
  Matrix<S> out = a.value().transpose();
  return a.tape()->record(std::move(out), {a}, [a](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g.transpose());
  });
}

template <typename S>
BasicVar<S> add(BasicVar<S> a, BasicVar<S> b) {
  if (detail::is_scalar(b) && !detail::is_scalar(a)) {
    Matrix<S> out = a.value().array() + b.value()(0, 0);
    return a.tape()->record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, const Matrix<S>& g) {
      t.accumulate(a, g);
      t.accumulate(b, Matrix<S>::Constant(1, 1, g.sum()));
    });
  }
  if (detail::is_scalar(a) && !detail::is_scalar(b)) return add(b, a);
  detail::require_same_shape("add", a, b);
  Matrix<S> out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename S>
BasicVar<S> scale(BasicVar<S> a, S s) {
  Matrix<S> out = a.value() * s;
  return a.tape()->record(std::move(out), {a}, [a, s](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, g * s);
  });
}

template <typename S>
BasicVar<S> sub(BasicVar<S> a, BasicVar<S> b) {
  return add(a, scale(b, S(-1)));
}

// Elementwise (Hadamard) product, with scalar broadcasting.
template <typename S>
BasicVar<S> mul(BasicVar<S> a, BasicVar<S> b) {
  if (detail::is_scalar(b) && !detail::is_scalar(a)) {
    Matrix<S> out = a.value() * b.value()(0, 0);
    return a.tape()->record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, const Matrix<S>& g) {
      if (t.needs_grad(a)) t.accumulate(a, g * b.value()(0, 0));
      if (t.needs_grad(b))
        t.accumulate(b, Matrix<S>::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    });
  }
  if (detail::is_scalar(a) && !detail::is_scalar(b)) return mul(b, a);
  detail::require_same_shape("mul", a, b);
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](BasicTape<S>& t, const Matrix<S>& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

template <typename S>
BasicVar<S> operator+(BasicVar<S> a, BasicVar<S> b) { return add(a, b); }
template <typename S>
BasicVar<S> operator-(BasicVar<S> a, BasicVar<S> b) { return sub(a, b); }
template <typename S>
BasicVar<S> operator-(BasicVar<S> a) { return scale(a, S(-1)); }
template <typename S>
BasicVar<S> operator*(BasicVar<S> a, S s) { return scale(a, s); }
template <typename S>
BasicVar<S> operator*(S s, BasicVar<S> a) { return scale(a, s); }

template <typename S>
BasicVar<S> tanh(BasicVar<S> a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  const BasicTape<S>* tape = a.tape();
  const Index self = static_cast<Index>(tape->size());
  return a.tape()->record(std::move(out), {a}, [a, self](BasicTape<S>& t, const Matrix<S>& g) {
    const Matrix<S>& y = t.value(BasicVar<S>(&t, self));
    t.accumulate(a, (g.array() * (S(1) - y.array().square())).matrix());
  });
}

// relu'(0) = 0.
template <typename S>
BasicVar<S> relu(BasicVar<S> a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return a.tape()->record(std::move(out), {a}, [a](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(a, (a.value().array() > S(0)).select(g.array(), S(0)).matrix());
  });
}

template <typename S>
BasicVar<S> sigmoid(BasicVar<S> a) {
  Matrix<S> out = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  const Index self = static_cast<Index>(a.tape()->size());
  return a.tape()->record(std::move(out), {a}, [a, self](BasicTape<S>& t, const Matrix<S>& g) {
    const Matrix<S>& y = t.value(BasicVar<S>(&t, self));
    t.accumulate(a, (g.array() * y.array() * (S(1) - y.array())).matrix());
  });
}

// Row-wise softmax with max subtraction.
template <typename S>
BasicVar<S> softmax_rows(BasicVar<S> a) {
  if (a.cols() < 1) throw std::invalid_argument("softmax_rows: needs at least one column");
  if (!a.value().allFinite()) throw std::invalid_argument("softmax_rows: non-finite input");
  Matrix<S> out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    const S m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const Index self = static_cast<Index>(a.tape()->size());
  return a.tape()->record(std::move(out), {a}, [a, self](BasicTape<S>& t, const Matrix<S>& g) {
    const Matrix<S>& y = t.value(BasicVar<S>(&t, self));
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dots = g.cwiseProduct(y).rowwise().sum();
    Matrix<S> dx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    t.accumulate(a, dx);
  });
}

// x (B,k) + bias (1,k) on every row.
template <typename S>
BasicVar<S> add_bias(BasicVar<S> x, BasicVar<S> bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw std::invalid_argument("add_bias: bias " + detail::shape_str(bias.rows(), bias.cols()) +
                                " does not fit " + detail::shape_str(x.rows(), x.cols()));
  Matrix<S> out = x.value().rowwise() + bias.value().row(0);
  return x.tape()->record(std::move(out), {x, bias}, [x, bias](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(x, g);
    if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

// x (B,k) scaled row-wise by c (B,1).
template <typename S>
BasicVar<S> mul_col(BasicVar<S> x, BasicVar<S> c) {
  if (c.cols() != 1 || c.rows() != x.rows())
    throw std::invalid_argument("mul_col: column " + detail::shape_str(c.rows(), c.cols()) +
                                " does not fit " + detail::shape_str(x.rows(), x.cols()));
  Matrix<S> out = x.value().array().colwise() * c.value().col(0).array();
  return x.tape()->record(std::move(out), {x, c}, [x, c](BasicTape<S>& t, const Matrix<S>& g) {
    if (t.needs_grad(x)) t.accumulate(x, (g.array().colwise() * c.value().col(0).array()).matrix());
    if (t.needs_grad(c)) t.accumulate(c, g.cwiseProduct(x.value()).rowwise().sum());
  });
}

template <typename S>
BasicVar<S> row_sum(BasicVar<S> x) {
  Matrix<S> out = x.value().rowwise().sum();
  return x.tape()->record(std::move(out), {x}, [x](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(x, g.replicate(1, x.cols()));
  });
}

template <typename S>
BasicVar<S> sum(BasicVar<S> x) {
  Matrix<S> out = Matrix<S>::Constant(1, 1, x.value().sum());
  return x.tape()->record(std::move(out), {x}, [x](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(x, Matrix<S>::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

template <typename S>
BasicVar<S> mean(BasicVar<S> x) {
  return scale(sum(x), S(1) / static_cast<S>(x.value().size()));
}

template <typename S>
BasicVar<S> slice_cols(BasicVar<S> x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  Matrix<S> out = x.value().middleCols(start, count);
  return x.tape()->record(std::move(out), {x}, [x, start, count](BasicTape<S>& t, const Matrix<S>& g) {
    Matrix<S> full = Matrix<S>::Zero(x.rows(), x.cols());
    full.middleCols(start, count) = g;
    t.accumulate(x, full);
  });
}

template <typename S>
BasicVar<S> slice_rows(BasicVar<S> x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  Matrix<S> out = x.value().middleRows(start, count);
  return x.tape()->record(std::move(out), {x}, [x, start, count](BasicTape<S>& t, const Matrix<S>& g) {
    Matrix<S> full = Matrix<S>::Zero(x.rows(), x.cols());
    full.middleRows(start, count) = g;
    t.accumulate(x, full);
  });
}

template <typename S>
BasicVar<S> concat_cols(std::span<const BasicVar<S>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<BasicVar<S>> keep(parts.begin(), parts.end());
  return parts.front().tape()->record_range(
      std::move(out), keep.begin(), keep.end(), [keep](BasicTape<S>& t, const Matrix<S>& g) {
        Index at = 0;
        for (const auto& p : keep) {
          if (t.needs_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
          at += p.cols();
        }
      });
}

template <typename S>
BasicVar<S> concat_rows(std::span<const BasicVar<S>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<BasicVar<S>> keep(parts.begin(), parts.end());
  return parts.front().tape()->record_range(
      std::move(out), keep.begin(), keep.end(), [keep](BasicTape<S>& t, const Matrix<S>& g) {
        Index at = 0;
        for (const auto& p : keep) {
          if (t.needs_grad(p)) t.accumulate(p, g.middleRows(at, p.rows()));
          at += p.rows();
        }
      });
}

// out(b, 0) = x(b, columns[b]).
template <typename S>
BasicVar<S> pick(BasicVar<S> x, std::vector<Index> columns) {
  if (static_cast<Index>(columns.size()) != x.rows())
    throw std::invalid_argument("pick: one column index per row required");
  Matrix<S> out(x.rows(), 1);
  for (Index r = 0; r < x.rows(); ++r) {
    const Index c = columns[static_cast<std::size_t>(r)];
    if (c < 0 || c >= x.cols()) throw std::invalid_argument("pick: column index out of range");
    out(r, 0) = x.value()(r, c);
  }
  return x.tape()->record(std::move(out), {x}, [x, columns = std::move(columns)](BasicTape<S>& t, const Matrix<S>& g) {
    Matrix<S> full = Matrix<S>::Zero(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) full(r, columns[static_cast<std::size_t>(r)]) = g(r, 0);
    t.accumulate(x, full);
  });
}

// x (B,n) times the transpose of a constant sparse (m,n) matrix. Used for the
// frozen reservoir, which never receives a gradient.
template <typename S, int Options>
BasicVar<S> matmul_sparse_t(BasicVar<S> x, const Eigen::SparseMatrix<S, Options>& w) {
  if (x.cols() != w.cols())
    throw std::invalid_argument("matmul_sparse_t: inner dimensions differ");
  Matrix<S> out = x.value() * w.transpose();
  const Eigen::SparseMatrix<S, Options>* wp = &w;
  return x.tape()->record(std::move(out), {x}, [x, wp](BasicTape<S>& t, const Matrix<S>& g) {
    t.accumulate(x, Matrix<S>(g * *wp));
  });
}

// Mean over elements of the Huber-style smooth L1 penalty.
template <typename S>
BasicVar<S> smooth_l1(BasicVar<S> pred, BasicVar<S> target, S beta = S(1)) {
  detail::require_same_shape("smooth_l1", pred, target);
  if (!(beta > S(0))) throw std::invalid_argument("smooth_l1: beta must be positive");
  const Matrix<S> d = pred.value() - target.value();
  const S n = static_cast<S>(d.size());
  const S loss = d.unaryExpr([beta](S v) {
                    const S a = std::abs(v);
                    return a < beta ? S(0.5) * v * v / beta : a - S(0.5) * beta;
                  }).sum() / n;
  return pred.tape()->record(Matrix<S>::Constant(1, 1, loss), {pred, target},
                             [pred, target, d, beta, n](BasicTape<S>& t, const Matrix<S>& g) {
                               const Matrix<S> dd = d.unaryExpr([beta](S v) {
                                 return std::abs(v) < beta ? v / beta : (v > 0 ? S(1) : S(-1));
                               }) * (g(0, 0) / n);
                               t.accumulate(pred, dd);
                               if (t.needs_grad(target)) t.accumulate(target, -dd);
                             });
}

template <typename S>
BasicVar<S> mse(BasicVar<S> pred, BasicVar<S> target) {
  detail::require_same_shape("mse", pred, target);
  const Matrix<S> d = pred.value() - target.value();
  const S n = static_cast<S>(d.size());
  return pred.tape()->record(Matrix<S>::Constant(1, 1, d.squaredNorm() / n), {pred, target},
                             [pred, target, d, n](BasicTape<S>& t, const Matrix<S>& g) {
                               const Matrix<S> dd = d * (S(2) * g(0, 0) / n);
                               t.accumulate(pred, dd);
                               if (t.needs_grad(target)) t.accumulate(target, -dd);
                             });
}

}  // namespace hpfold::ad
