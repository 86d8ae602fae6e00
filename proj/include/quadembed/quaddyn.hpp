#pragma once

#include <Eigen/Dense>
#include <vector>

namespace qde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Latent dynamics z' = A z + H (z kron z) + b.
///
/// H acts on the full Kronecker square (length n^2), so it is not unique:
/// compare models through their action on probe states, never entrywise.
class QuadraticModel {
 public:
  /// Throws DimensionError on inconsistent shapes and DomainError on
  /// non-finite entries.
  QuadraticModel(Matrix A, Matrix H, Vector b);

  static QuadraticModel zeros(int latent_dim);

  int latent_dim() const noexcept { return static_cast<int>(b_.size()); }
  const Matrix& A() const noexcept { return A_; }
  const Matrix& H() const noexcept { return H_; }
  const Vector& b() const noexcept { return b_; }

 private:
  Matrix A_;
  Matrix H_;
  Vector b_;
};

struct LatentState {
  Vector z;
  double t = 0.0;
};

/// Uniformly spaced sequence of latent states.
struct LatentTrajectory {
  std::vector<LatentState> states;
  double dt = 0.0;

  std::size_t size() const noexcept { return states.size(); }
  /// Rows are states, columns latent coordinates.
  Matrix as_matrix() const;
};

/// w[i*n + j] = z[i] * z[j].
Vector kron_sq(const Vector& z);

/// A z + H kron_sq(z) + b. Throws DimensionError / OverflowError.
Vector eval_rhs(const QuadraticModel& model, const Vector& z);

/// One classical RK4 step forward by h > 0.
/// Throws DivergenceError carrying the failing stage (1-4).
Vector rk4_step(const QuadraticModel& model, const Vector& z, double h);

/// One RK4 step backward in time, i.e. with step -h.
Vector rk4_step_back(const QuadraticModel& model, const Vector& z, double h);

/// steps+1 states starting at (z0, t0). A DivergenceError from any step is
/// rethrown with that step index.
LatentTrajectory rollout(const QuadraticModel& model, const Vector& z0, double h,
                         int steps, double t0 = 0.0);

}  // namespace qde
