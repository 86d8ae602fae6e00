#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace qde::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Trainable array with a stable name. The set does not own storage; it
/// points into networks and models that outlive it.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Matrix* value;
  };

  void add(std::string name, Matrix& value);
  void append(const ParameterSet& other);

  std::size_t size() const noexcept { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total number of scalar parameters.
  std::size_t count() const;

 private:
  std::vector<Entry> entries_;
};

/// One gradient array per parameter, in ParameterSet order.
using Gradients = std::vector<Matrix>;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recorder over dense matrices. Every op appends a node whose
/// backward closure scatters its adjoint into its parents. Constants carry no
/// gradient, so subgraphs depending only on data are skipped in backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);

  /// Leaf bound to `storage`; repeated calls with the same storage return the
  /// same node.
  Var parameter(Matrix& storage);

  /// Appends a node. `backward` may be empty when no parent needs gradients.
  Var record(Matrix value, bool needs_grad, BackwardFn backward);

  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& grad(const Var& v) const { return grad(v.id()); }

  /// Adds `delta` to the adjoint of `id` if that node needs gradients.
  void accumulate(std::size_t id, const Matrix& delta);

  /// Seeds d loss / d loss = 1 and runs all backward closures in reverse.
  /// Throws GradientError unless `loss` is a finite 1x1 node.
  void backward(const Var& loss);

  /// Gradient for each entry of `params`; zeros for parameters the loss did
  /// not touch. Valid after backward().
  Gradients gradients(const ParameterSet& params) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, std::size_t> params_;
};

// Differentiable operations. All operands must live on the same tape.

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var hadamard(const Var& a, const Var& b);

/// a * b.
Var matmul(const Var& a, const Var& b);
/// x * m^T.
Var matmul_t(const Var& x, const Var& m);
/// x * W^T + 1 bias^T with bias a column vector of length W.rows().
Var linear(const Var& x, const Var& weights, const Var& bias);
/// Adds the column vector `b` to every row of x.
Var add_row(const Var& x, const Var& b);

Var elu(const Var& x);

/// Row-wise Kronecker square: out(r, i*n + j) = x(r, i) * x(r, j).
Var kron_rows(const Var& x);

/// Rows [start, start + count).
Var rows(const Var& x, Eigen::Index start, Eigen::Index count);

/// Per-column standardization over the batch with population variance.
/// `mean` / `var` receive the batch statistics when non-null.
Var batch_standardize(const Var& x, double epsilon, Vector* mean = nullptr,
                      Vector* var = nullptr);

/// Mean of squared entries, 1x1.
Var mean_square(const Var& x);
/// Sum of entries, 1x1.
Var sum(const Var& x);

}  // namespace qde::nn
