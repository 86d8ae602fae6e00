#pragma once

#include "quadembed/datagen.hpp"
#include "quadembed/network.hpp"
#include "quadembed/quaddyn.hpp"

namespace qde {

/// Orthonormal POD basis (columns) with descending singular values.
struct PodBasis {
  Matrix basis;            // n x r
  Vector singular_values;  // r, descending
  int r() const noexcept { return static_cast<int>(basis.cols()); }
};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues descending; eigenvectors in matching columns.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol = 1e-15, int max_sweeps = 100);

/// Top-r state-space directions of the snapshot matrix (rows = snapshots),
/// from the eigen-decomposition of the smaller Gram matrix.
/// Throws RankError when r > min(N_t, n) or sigma_r < 1e-12 * sigma_1, ConfigError
/// when r < 1.
PodBasis pod_basis(const Matrix& snapshots, int r);

/// X V.
Matrix project(const PodBasis& basis, const Matrix& snapshots);
/// Z V^T.
Matrix lift_linear(const PodBasis& basis, const Matrix& latent);

/// Central differences (z_{i+1} - z_{i-1}) / (2 dt) for i = 1 .. N_t-2.
Matrix estimate_derivatives(const Matrix& latent, double dt);

/// Rows [z, z kron z, 1], one per latent row.
Matrix opinf_design(const Matrix& latent);

/// Ridge least squares min ||D T - Zdot||^2 + reg ||T||^2 for the quadratic
/// operators. Throws ConditioningError when reg == 0 and the normal matrix is
/// singular.
QuadraticModel opinf_fit(const Matrix& latent, const Matrix& derivatives, double reg);

/// Per-coordinate residual norms ||D T - Zdot|| of a fitted model.
Vector opinf_residuals(const QuadraticModel& model, const Matrix& latent,
                       const Matrix& derivatives);

/// POD projection plus an operator-inference model on its coordinates.
struct LinearRom {
  PodBasis pod;
  QuadraticModel model = QuadraticModel::zeros(1);

  /// Identity-activation codec: encoder V^T, decoder V, zero biases.
  nn::Network encoder() const;
  nn::Network decoder() const;
};

/// Fits on the rows of ds.snapshots with central-difference derivatives
/// (first and last rows serve only as stencil ends).
LinearRom fit_linear_rom(const SnapshotDataset& ds, int r, double reg);

}  // namespace qde
