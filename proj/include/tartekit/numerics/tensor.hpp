#pragma once

// Dense row-major matrices with a tape-based reverse-mode differentiator.
//
// Every quantity in the encoder is at most rank 2, so a "tensor" here is an
// Eigen row-major matrix. Vectors are 1 x n rows. Persistent weights live in
// Parameter objects; each training step records the forward computation on a
// Tape, calls backward() once and then reset()s the tape.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tartekit/error.hpp"

namespace tartekit {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixXd = Matrix<double>;
using RowVectorXd = RowVector<double>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// A named trainable (or frozen) weight matrix with its gradient buffer.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  // Written by Tape::backward; mutable so read-only models can still be
  // recorded on a tape.
  mutable Matrix<Scalar> grad;
  bool requires_grad = true;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

// Handle to a node recorded on a tape. Cheap to copy; valid until reset().
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<Scalar>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  // Receives the gradient of the node's output and pushes it to the inputs.
  using BackwardFn = std::function<void(Tape&, const Mat& upstream)>;

  // A tape built with record_gradients == false treats every parameter as
  // a constant, which is the inference path.
  explicit Tape(bool record_gradients = true) : record_gradients_(record_gradients) {}

  Var<Scalar> constant(Mat value) { return push(std::move(value), false, nullptr); }

  // Binds a parameter as a leaf. A parameter is recorded once per tape;
  // repeated calls return the same node.
  Var<Scalar> param(const Parameter<Scalar>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Var<Scalar> v = push(p.value, record_gradients_ && p.requires_grad, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var<Scalar> push(Mat value, bool needs_grad, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Mat& value(Var<Scalar> v) const { return nodes_[v.id].value; }
  bool needs_grad(Var<Scalar> v) const { return nodes_[v.id].needs_grad; }

  // Adds g into the gradient slot of v (no-op for nodes outside the graph).
  void accumulate(Var<Scalar> v, const Mat& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Gradient of a node after backward(); zero-sized if nothing reached it.
  const Mat& grad(Var<Scalar> v) const { return nodes_[v.id].grad; }

  // Reverse sweep from a 1x1 output. Parameter leaves add their gradient
  // into Parameter::grad.
  void backward(Var<Scalar> output) {
    const Mat& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) throw DimensionError("backward() needs a 1x1 output");
    if (!nodes_[output.id].needs_grad) return;
    accumulate(output, Mat::Ones(1, 1));
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) {
        n.backward(*this, n.grad);
      } else if (n.param != nullptr && n.param->requires_grad) {
        n.param->grad += n.grad;
      }
    }
  }

  void reset() {
    nodes_.clear();
    param_nodes_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    const Parameter<Scalar>* param = nullptr;
    bool needs_grad = false;
  };

  bool record_gradients_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, std::size_t> param_nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(Var<Scalar> a, Var<Scalar> b) {
  if (a.tape != b.tape) throw InvalidArgument("operands recorded on different tapes");
}

template <typename Scalar>
void require_same_shape(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(av.cols()) + " and " +
                         std::to_string(bv.rows()) + " differ");
  }
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = av * bv;
  return t.push(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  if (tp.needs_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
                  if (tp.needs_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
                });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value() + b.value(), t.needs_grad(a) || t.needs_grad(b),
                [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  tp.accumulate(a, g);
                  tp.accumulate(b, g);
                });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value() - b.value(), t.needs_grad(a) || t.needs_grad(b),
                [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  tp.accumulate(a, g);
                  if (tp.needs_grad(b)) tp.accumulate(b, -g);
                });
}

// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value().cwiseProduct(b.value()), t.needs_grad(a) || t.needs_grad(b),
                [a, b](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
                  if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
                });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value() * s, t.needs_grad(a),
                [a, s](Tape<Scalar>& tp, const Matrix<Scalar>& g) { tp.accumulate(a, g * s); });
}

// x (n x m) plus a 1 x m row broadcast over every row.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> x, Var<Scalar> row) {
  detail::require_same_tape(x, row);
  const auto& xv = x.value();
  const auto& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) throw DimensionError("add_row: bias must be 1 x cols");
  Tape<Scalar>& t = *x.tape;
  Matrix<Scalar> out = xv.rowwise() + rv.row(0);
  return t.push(std::move(out), t.needs_grad(x) || t.needs_grad(row),
                [x, row](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  tp.accumulate(x, g);
                  if (tp.needs_grad(row)) tp.accumulate(row, Matrix<Scalar>(g.colwise().sum()));
                });
}

// x W + b, the affine map used by every Linear layer.
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias) {
  return add_row(matmul(x, weight), bias);
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  return t.push(a.value().cwiseMax(Scalar(0)), t.needs_grad(a),
                [a](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  const auto& x = tp.value(a);
                  tp.accumulate(a, Matrix<Scalar>((x.array() > Scalar(0)).select(g, Scalar(0))));
                });
}

template <typename Scalar>
Var<Scalar> exponential(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = a.value().array().exp().matrix();
  // The backward pass reads the output back off the tape.
  const std::size_t out_id = t.size();
  return t.push(std::move(out), t.needs_grad(a),
                [a, out_id](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  tp.accumulate(a, g.cwiseProduct(tp.value(Var<Scalar>{&tp, out_id})));
                });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs_grad(a), [a](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    const auto& x = tp.value(a);
    tp.accumulate(a, Matrix<Scalar>::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

// Rows [start, start + count) of a.
template <typename Scalar>
Var<Scalar> rows(Var<Scalar> a, Eigen::Index start, Eigen::Index count) {
  const auto& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) throw DimensionError("rows: range out of bounds");
  Tape<Scalar>& t = *a.tape;
  Matrix<Scalar> out = av.middleRows(start, count);
  return t.push(std::move(out), t.needs_grad(a),
                [a, start, count](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  const auto& x = tp.value(a);
                  Matrix<Scalar> full = Matrix<Scalar>::Zero(x.rows(), x.cols());
                  full.middleRows(start, count) = g;
                  tp.accumulate(a, full);
                });
}

// Vertical concatenation. All parts must share a column count.
template <typename Scalar>
Var<Scalar> vstack(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw InvalidArgument("vstack: no inputs");
  Tape<Scalar>& t = *parts.front().tape;
  const Eigen::Index cols = parts.front().value().cols();
  Eigen::Index total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.tape != &t) throw InvalidArgument("vstack: operands recorded on different tapes");
    if (p.value().cols() != cols) throw DimensionError("vstack: column counts differ");
    total += p.value().rows();
    needs = needs || t.needs_grad(p);
  }
  Matrix<Scalar> out(total, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.value().rows()) = p.value();
    offset += p.value().rows();
  }
  return t.push(std::move(out), needs, [parts](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      const Eigen::Index r = tp.value(p).rows();
      if (tp.needs_grad(p)) tp.accumulate(p, Matrix<Scalar>(g.middleRows(off, r)));
      off += r;
    }
  });
}

template <typename Scalar>
inline constexpr Scalar kLayerNormEps = Scalar(1e-5);

// Row-wise normalization to zero mean and unit (biased) variance, then
// gain * x_hat + bias. gain and bias are 1 x d.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias) {
  detail::require_same_tape(x, gain);
  detail::require_same_tape(x, bias);
  const auto& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  if (d < 1) throw DimensionError("layer_norm: needs at least one column");
  if (gain.value().rows() != 1 || gain.value().cols() != d || bias.value().rows() != 1 ||
      bias.value().cols() != d) {
    throw DimensionError("layer_norm: gain/bias must be 1 x d");
  }
  Matrix<Scalar> xhat(n, d);
  RowVector<Scalar> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mu = xv.row(i).mean();
    const auto centered = (xv.row(i).array() - mu).matrix().eval();
    const Scalar var = centered.squaredNorm() / static_cast<Scalar>(d);
    inv_std(i) = Scalar(1) / std::sqrt(var + kLayerNormEps<Scalar>);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  Tape<Scalar>& t = *x.tape;
  const bool needs = t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias);
  return t.push(std::move(out), needs,
                [x, gain, bias, xhat, inv_std](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  if (tp.needs_grad(gain)) {
                    tp.accumulate(gain, Matrix<Scalar>(g.cwiseProduct(xhat).colwise().sum()));
                  }
                  if (tp.needs_grad(bias)) tp.accumulate(bias, Matrix<Scalar>(g.colwise().sum()));
                  if (!tp.needs_grad(x)) return;
                  const auto& gv = tp.value(gain);
                  const Eigen::Index d = xhat.cols();
                  Matrix<Scalar> dx(xhat.rows(), d);
                  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                    const RowVector<Scalar> gh = g.row(i).cwiseProduct(gv.row(0));
                    const Scalar m1 = gh.mean();
                    const Scalar m2 = gh.cwiseProduct(xhat.row(i)).mean();
                    dx.row(i) = inv_std(i) * (gh.array() - m1 - xhat.row(i).array() * m2).matrix();
                  }
                  tp.accumulate(x, dx);
                });
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& x) {
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// Backward of a row softmax with output p: dx = p * (g - <g, p>).
template <typename Scalar>
Matrix<Scalar> softmax_rows_backward(const Matrix<Scalar>& p, const Matrix<Scalar>& g) {
  Matrix<Scalar> dx(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Scalar dot = g.row(i).dot(p.row(i));
    dx.row(i) = p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
  }
  return dx;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape;
  Matrix<Scalar> out = detail::softmax_rows_value(x.value());
  const std::size_t out_id = t.size();
  return t.push(std::move(out), t.needs_grad(x), [x, out_id](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    tp.accumulate(x, detail::softmax_rows_backward(tp.value(Var<Scalar>{&tp, out_id}), g));
  });
}

// Scaled dot-product attention over `heads` equal column blocks of q, k, v
// (all n x d). No masking and no positional terms: the output is
// equivariant under any permutation of the rows.
template <typename Scalar>
Var<Scalar> multi_head_attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, int heads) {
  detail::require_same_tape(q, k);
  detail::require_same_tape(q, v);
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  detail::require_same_shape(qv, kv, "multi_head_attention");
  detail::require_same_shape(qv, vv, "multi_head_attention");
  const Eigen::Index d = qv.cols();
  if (heads < 1 || d % heads != 0) throw DimensionError("multi_head_attention: width not divisible by heads");
  const Eigen::Index dh = d / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  std::vector<Matrix<Scalar>> probs(static_cast<std::size_t>(heads));
  Matrix<Scalar> out(qv.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c = h * dh;
    Matrix<Scalar> scores = qv.middleCols(c, dh) * kv.middleCols(c, dh).transpose() * inv_sqrt;
    probs[static_cast<std::size_t>(h)] = detail::softmax_rows_value(scores);
    out.middleCols(c, dh) = probs[static_cast<std::size_t>(h)] * vv.middleCols(c, dh);
  }
  Tape<Scalar>& t = *q.tape;
  const bool needs = t.needs_grad(q) || t.needs_grad(k) || t.needs_grad(v);
  return t.push(std::move(out), needs,
                [q, k, v, heads, dh, inv_sqrt, probs = std::move(probs)](Tape<Scalar>& tp,
                                                                         const Matrix<Scalar>& g) {
                  const auto& qv = tp.value(q);
                  const auto& kv = tp.value(k);
                  const auto& vv = tp.value(v);
                  Matrix<Scalar> dq = Matrix<Scalar>::Zero(qv.rows(), qv.cols());
                  Matrix<Scalar> dk = Matrix<Scalar>::Zero(kv.rows(), kv.cols());
                  Matrix<Scalar> dv = Matrix<Scalar>::Zero(vv.rows(), vv.cols());
                  for (int h = 0; h < heads; ++h) {
                    const Eigen::Index c = h * dh;
                    const Matrix<Scalar>& p = probs[static_cast<std::size_t>(h)];
                    const Matrix<Scalar> go = g.middleCols(c, dh);
                    dv.middleCols(c, dh) = p.transpose() * go;
                    const Matrix<Scalar> dp = go * vv.middleCols(c, dh).transpose();
                    const Matrix<Scalar> ds = detail::softmax_rows_backward(p, dp) * inv_sqrt;
                    dq.middleCols(c, dh) = ds * kv.middleCols(c, dh);
                    dk.middleCols(c, dh) = ds.transpose() * qv.middleCols(c, dh);
                  }
                  tp.accumulate(q, dq);
                  tp.accumulate(k, dk);
                  tp.accumulate(v, dv);
                });
}

// Inverted dropout: zeroes entries with probability p and rescales the rest
// by 1/(1-p). With p == 0 it returns x unchanged.
template <typename Scalar, typename Rng>
Var<Scalar> dropout(Var<Scalar> x, Scalar p, Rng& rng) {
  if (p <= Scalar(0)) return x;
  if (p >= Scalar(1)) throw InvalidArgument("dropout: probability must be below 1");
  const auto& xv = x.value();
  std::bernoulli_distribution keep(static_cast<double>(Scalar(1) - p));
  Matrix<Scalar> mask(xv.rows(), xv.cols());
  const Scalar kept = Scalar(1) / (Scalar(1) - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? kept : Scalar(0);
  Tape<Scalar>& t = *x.tape;
  return mul(x, t.constant(std::move(mask)));
}

// Squared Euclidean distances between all row pairs of z (n x q) -> n x n.
template <typename Scalar>
Var<Scalar> pairwise_sq_dists(Var<Scalar> z) {
  const auto& zv = z.value();
  const Eigen::Index n = zv.rows();
  const RowVector<Scalar> norms = zv.rowwise().squaredNorm().transpose();
  Matrix<Scalar> out = Scalar(-2) * zv * zv.transpose();
  out.colwise() += norms.transpose();
  out.rowwise() += norms;
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = Scalar(0);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      // The expanded form can round slightly below zero.
      const Scalar s = std::max(Scalar(0), Scalar(0.5) * (out(i, j) + out(j, i)));
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  Tape<Scalar>& t = *z.tape;
  return t.push(std::move(out), t.needs_grad(z), [z](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
    const auto& zv = tp.value(z);
    const Matrix<Scalar> sym = g + g.transpose();
    const Eigen::VectorX<Scalar> rowsum = sym.rowwise().sum();
    Matrix<Scalar> dz = Scalar(2) * (rowsum.asDiagonal() * zv - sym * zv);
    tp.accumulate(z, dz);
  });
}

// Mean squared error between pred and a constant target of the same shape.
template <typename Scalar>
Var<Scalar> mse(Var<Scalar> pred, const Matrix<Scalar>& target) {
  detail::require_same_shape(pred.value(), target, "mse");
  Tape<Scalar>& t = *pred.tape;
  return mean(mul(sub(pred, t.constant(target)), sub(pred, t.constant(target))));
}

// Mean binary cross-entropy of logits against {0,1} targets, evaluated in
// the overflow-free form max(z,0) - z*y + log(1 + exp(-|z|)).
template <typename Scalar>
Var<Scalar> bce_with_logits(Var<Scalar> logits, const Matrix<Scalar>& target) {
  detail::require_same_shape(logits.value(), target, "bce_with_logits");
  const auto& z = logits.value();
  const Scalar n = static_cast<Scalar>(z.size());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const Scalar zi = z.data()[i];
    total += std::max(zi, Scalar(0)) - zi * target.data()[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / n;
  Tape<Scalar>& t = *logits.tape;
  return t.push(std::move(out), t.needs_grad(logits),
                [logits, target, n](Tape<Scalar>& tp, const Matrix<Scalar>& g) {
                  const auto& z = tp.value(logits);
                  Matrix<Scalar> dz(z.rows(), z.cols());
                  for (Eigen::Index i = 0; i < z.size(); ++i) {
                    const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-z.data()[i]));
                    dz.data()[i] = g(0, 0) * (s - target.data()[i]) / n;
                  }
                  tp.accumulate(logits, dz);
                });
}

}  // namespace tartekit
