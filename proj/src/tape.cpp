#include "quadembed/tape.hpp"

#include <cmath>

#include "quadembed/errors.hpp"

namespace qde::nn {

void ParameterSet::add(std::string name, Matrix& value) {
  entries_.push_back({std::move(name), &value});
}

void ParameterSet::append(const ParameterSet& other) {
  entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

std::size_t ParameterSet::count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += static_cast<std::size_t>(e.value->size());
  return total;
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("scalar() on a non-1x1 value");
  }
  return v(0, 0);
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, {}); }

Var Tape::parameter(Matrix& storage) {
  if (auto it = params_.find(&storage); it != params_.end()) {
    return Var(this, it->second);
  }
  Var v = record(storage, true, {});
  params_.emplace(&storage, v.id());
  return v;
}

Var Tape::record(Matrix value, bool needs_grad, BackwardFn backward) {
  nodes_.push_back({std::move(value), Matrix(), std::move(backward), needs_grad});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
  Node& node = nodes_[id];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = delta;
  } else {
    node.grad += delta;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) {
    throw GradientError("loss was recorded on a different tape");
  }
  const Matrix& v = nodes_[loss.id()].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw GradientError("backward() needs a scalar loss");
  }
  if (!std::isfinite(v(0, 0))) {
    throw GradientError("loss is not finite");
  }
  for (auto& node : nodes_) node.grad.resize(0, 0);
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.size() == 0 || !node.backward) continue;
    node.backward(*this, i);
  }
}

Gradients Tape::gradients(const ParameterSet& params) const {
  Gradients out;
  out.reserve(params.size());
  for (const auto& entry : params) {
    auto it = params_.find(entry.value);
    if (it == params_.end() || nodes_[it->second].grad.size() == 0) {
      out.push_back(Matrix::Zero(entry.value->rows(), entry.value->cols()));
    } else {
      out.push_back(nodes_[it->second].grad);
    }
  }
  return out;
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw DimensionError("operands live on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    tp.accumulate(ia, tp.grad(self));
                    tp.accumulate(ib, tp.grad(self));
                  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    tp.accumulate(ia, tp.grad(self));
                    tp.accumulate(ib, -tp.grad(self));
                  });
}

Var operator*(double s, const Var& a) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(s * a.value(), t.needs_grad(a), [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate(ia, s * tp.grad(self));
  });
}

Var hadamard(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                    tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  const bool ga = t.needs_grad(a), gb = t.needs_grad(b);
  return t.record(a.value() * b.value(), ga || gb, [ia, ib, ga, gb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (ga) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (gb) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var matmul_t(const Var& x, const Var& m) {
  Tape& t = same_tape(x, m);
  if (x.cols() != m.cols()) throw DimensionError("matmul_t: inner dimensions differ");
  const std::size_t ix = x.id(), im = m.id();
  const bool gx = t.needs_grad(x), gm = t.needs_grad(m);
  return t.record(x.value() * m.value().transpose(), gx || gm,
                  [ix, im, gx, gm](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (gx) tp.accumulate(ix, g * tp.value(im));
                    if (gm) tp.accumulate(im, g.transpose() * tp.value(ix));
                  });
}

Var linear(const Var& x, const Var& weights, const Var& bias) {
  Tape& t = same_tape(x, weights);
  same_tape(x, bias);
  if (x.cols() != weights.cols()) throw DimensionError("linear: input width mismatch");
  if (bias.rows() != weights.rows() || bias.cols() != 1) {
    throw DimensionError("linear: bias must be a column of length out");
  }
  const std::size_t ix = x.id(), iw = weights.id(), ib = bias.id();
  const bool gx = t.needs_grad(x), gw = t.needs_grad(weights), gb = t.needs_grad(bias);
  Matrix y = x.value() * weights.value().transpose();
  y.rowwise() += bias.value().col(0).transpose();
  return t.record(std::move(y), gx || gw || gb,
                  [ix, iw, ib, gx, gw, gb](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (gx) tp.accumulate(ix, g * tp.value(iw));
                    if (gw) tp.accumulate(iw, g.transpose() * tp.value(ix));
                    if (gb) tp.accumulate(ib, g.colwise().sum().transpose());
                  });
}

Var add_row(const Var& x, const Var& b) {
  Tape& t = same_tape(x, b);
  if (b.cols() != 1 || b.rows() != x.cols()) {
    throw DimensionError("add_row: vector length must equal the row width");
  }
  const std::size_t ix = x.id(), ib = b.id();
  Matrix y = x.value();
  y.rowwise() += b.value().col(0).transpose();
  return t.record(std::move(y), t.needs_grad(x) || t.needs_grad(b),
                  [ix, ib](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    tp.accumulate(ix, g);
                    tp.accumulate(ib, g.colwise().sum().transpose());
                  });
}

Var elu(const Var& x) {
  Tape& t = *x.tape();
  const std::size_t ix = x.id();
  Matrix y = x.value().unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  return t.record(std::move(y), t.needs_grad(x), [ix](Tape& tp, std::size_t self) {
    const Matrix& in = tp.value(ix);
    const Matrix& out = tp.value(self);
    // d elu / dx = 1 for x > 0, exp(x) = elu(x) + 1 otherwise.
    const Eigen::ArrayXXd slope =
        (in.array() > 0.0).select(Eigen::ArrayXXd::Ones(in.rows(), in.cols()), out.array() + 1.0);
    tp.accumulate(ix, (tp.grad(self).array() * slope).matrix());
  });
}

Var kron_rows(const Var& x) {
  Tape& t = *x.tape();
  const std::size_t ix = x.id();
  const Matrix& z = x.value();
  const Eigen::Index n = z.cols();
  if (n == 0) throw DimensionError("kron_rows of an empty row");
  Matrix y(z.rows(), n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y.middleCols(i * n, n) = z.col(i).asDiagonal() * z;
  }
  return t.record(std::move(y), t.needs_grad(x), [ix, n](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& zz = tp.value(ix);
    Matrix dz = Matrix::Zero(zz.rows(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto block = g.middleCols(i * n, n);
      // out(:, i*n + j) = z_i z_j
      dz.col(i) += block.cwiseProduct(zz).rowwise().sum();
      dz += zz.col(i).asDiagonal() * block;
    }
    tp.accumulate(ix, dz);
  });
}

Var rows(const Var& x, Eigen::Index start, Eigen::Index count) {
  Tape& t = *x.tape();
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw DimensionError("rows: range out of bounds");
  }
  const std::size_t ix = x.id();
  return t.record(x.value().middleRows(start, count), t.needs_grad(x),
                  [ix, start, count](Tape& tp, std::size_t self) {
                    const Matrix& in = tp.value(ix);
                    Matrix d = Matrix::Zero(in.rows(), in.cols());
                    d.middleRows(start, count) = tp.grad(self);
                    tp.accumulate(ix, d);
                  });
}

Var batch_standardize(const Var& x, double epsilon, Vector* mean, Vector* var) {
  Tape& t = *x.tape();
  const Matrix& in = x.value();
  const Eigen::Index batch = in.rows();
  if (batch < 2) {
    throw DimensionError("batch standardization needs at least two rows");
  }
  const Vector mu = in.colwise().mean().transpose();
  Matrix centered = in.rowwise() - mu.transpose();
  const Vector sigma2 = centered.colwise().squaredNorm().transpose() / static_cast<double>(batch);
  const Vector inv_std = (sigma2.array() + epsilon).rsqrt().matrix();
  Matrix y = centered * inv_std.asDiagonal();
  if (mean) *mean = mu;
  if (var) *var = sigma2;
  const std::size_t ix = x.id();
  return t.record(std::move(y), t.needs_grad(x), [ix, inv_std](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& yhat = tp.value(self);
    const double m = static_cast<double>(g.rows());
    const Eigen::RowVectorXd g_mean = g.colwise().sum() / m;
    const Eigen::RowVectorXd gy_mean = g.cwiseProduct(yhat).colwise().sum() / m;
    Matrix d = g.rowwise() - g_mean;
    d -= yhat * gy_mean.asDiagonal();
    tp.accumulate(ix, d * inv_std.asDiagonal());
  });
}

Var mean_square(const Var& x) {
  Tape& t = *x.tape();
  const std::size_t ix = x.id();
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw DimensionError("mean_square of an empty value");
  Matrix y(1, 1);
  y(0, 0) = x.value().squaredNorm() / n;
  return t.record(std::move(y), t.needs_grad(x), [ix, n](Tape& tp, std::size_t self) {
    tp.accumulate(ix, (2.0 * tp.grad(self)(0, 0) / n) * tp.value(ix));
  });
}

Var sum(const Var& x) {
  Tape& t = *x.tape();
  const std::size_t ix = x.id();
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return t.record(std::move(y), t.needs_grad(x), [ix](Tape& tp, std::size_t self) {
    const Matrix& in = tp.value(ix);
    tp.accumulate(ix, Matrix::Constant(in.rows(), in.cols(), tp.grad(self)(0, 0)));
  });
}

}  // namespace qde::nn
