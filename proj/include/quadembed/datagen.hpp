#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "quadembed/quaddyn.hpp"

namespace qde {

/// Named contiguous slice of the state vector.
struct FieldSlice {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index length = 0;
};

struct FieldRange {
  double min = 0.0;
  double max = 1.0;
};

/// Rows are states x(t0 + i*dt).
struct SnapshotDataset {
  Matrix snapshots;
  double dt = 0.0;
  double t0 = 0.0;
  std::vector<FieldSlice> fields;
  /// Present when `snapshots` holds normalized values; one range per field.
  std::optional<std::vector<FieldRange>> normalization;

  Eigen::Index n_steps() const noexcept { return snapshots.rows(); }
  Eigen::Index n_state() const noexcept { return snapshots.cols(); }

  /// Throws DatasetError when the layout does not tile the state or values are
  /// not finite.
  void validate() const;
};

/// Per-field affine map onto [0, 1].
struct Scaler {
  std::vector<FieldSlice> fields;
  std::vector<FieldRange> ranges;

  Matrix apply(const Matrix& raw) const;
  Matrix invert(const Matrix& normalized) const;
};

struct Normalized {
  SnapshotDataset dataset;
  Scaler scaler;
};

/// Throws DatasetError naming the field when a field is constant.
Normalized normalize(const SnapshotDataset& ds);
SnapshotDataset denormalize(const SnapshotDataset& ds, const Scaler& scaler);
/// Scaler recorded in an already-normalized dataset.
Scaler scaler_of(const SnapshotDataset& ds);

struct Triplet {
  Eigen::Index prev;
  Eigen::Index curr;
  Eigen::Index next;
};

/// (i-1, i, i+1) for i = 1 .. N_t-2. Throws DatasetError when N_t < 3.
std::vector<Triplet> make_triplets(const SnapshotDataset& ds);

// Pendulum and its quadratic lifting.

/// x1' = -sin(x2), x2' = x1.
Vector pendulum_rhs(const Vector& x);
/// (x1, x2) -> (x1, x2, sin x2, cos x2).
Vector lift_pendulum(const Vector& x);
Vector unlift_pendulum(const Vector& z);
/// (-z3, z1, z1 z4, -z1 z3).
Vector pendulum_lifted_rhs(const Vector& z);
/// The lifted field as (A, H, b).
QuadraticModel pendulum_lifted_model();

using VectorField = std::function<Vector(const Vector&)>;

/// RK4 trajectory of `rhs` with steps+1 rows (single field "x").
/// Throws DivergenceError with the failing step.
SnapshotDataset simulate_ode(const VectorField& rhs, const Vector& x0, double h, int steps);

struct PendulumParams {
  Vector x0 = (Vector(2) << 0.0, 1.0).finished();
  double h = 0.01;
  double T = 10.0;
};

/// Fields x1, x2.
SnapshotDataset make_pendulum_dataset(const PendulumParams& params);
/// Pendulum trajectory mapped through lift_pendulum; fields z1..z4.
SnapshotDataset make_lifted_pendulum_dataset(const PendulumParams& params);

// Tubular reactor.

/// psi * exp(gamma - gamma / theta). Throws DomainError for theta <= 0.
double arrhenius(double psi, double theta, double gamma);

struct ReactorParams {
  double D = 0.167;
  double Pe = 5.0;
  double gamma = 25.0;
  int n_x = 99;
  /// Solver step; 0 picks the largest stable step dividing `dt`.
  double dt_sim = 0.0;
  double T = 60.0;
  /// Sampling interval of the snapshots.
  double dt = 0.05;

  void validate() const;
  double dx() const { return 1.0 / (n_x + 1); }
  /// Explicit diffusion bound 0.4 * Pe * dx^2.
  double stable_step() const { return 0.4 * Pe * dx() * dx(); }
};

/// Method-of-lines right-hand side on the n_x interior nodes, state = [psi; theta].
Vector reactor_rhs(const ReactorParams& params, const Vector& state);

/// Fields psi, theta; rows every params.dt on [0, T].
SnapshotDataset simulate_reactor(const ReactorParams& params);

// 2D inviscid Burgers.

struct BurgersParams {
  double lo = -0.1;
  double hi = 1.5;
  int n_cells = 64;
  /// Cells along y; 0 means n_cells, 1 gives the 1D problem along x.
  int n_cells_y = 0;
  double T = 1.0;
  int n_snapshots = 100;
  double cfl = 0.5;
  /// Replaces the square block with a uniform state when set.
  std::optional<double> constant_initial;

  void validate() const;
  int nx() const { return n_cells; }
  int ny() const { return n_cells_y == 0 ? n_cells : n_cells_y; }
  double dx() const { return (hi - lo) / nx(); }
  double dy() const { return (hi - lo) / ny(); }
  /// Center of cell i along either axis.
  double center_x(int i) const { return lo + (i + 0.5) * dx(); }
  double center_y(int j) const { return lo + (j + 0.5) * dy(); }
};

/// Field u flattened row-major (index j * nx + i, j along y).
SnapshotDataset simulate_burgers2d(const BurgersParams& params);

}  // namespace qde
