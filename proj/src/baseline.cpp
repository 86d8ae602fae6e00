#include "quadembed/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "quadembed/errors.hpp"

namespace qde {

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol, int max_sweeps) {
  const Eigen::Index n = symmetric.rows();
  if (symmetric.cols() != n) throw DimensionError("jacobi_eigen needs a square matrix");
  Matrix a = 0.5 * (symmetric + symmetric.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(2.0 * off) <= tol * scale) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with J the (p, q) rotation.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

PodBasis pod_basis(const Matrix& snapshots, int r) {
  const Eigen::Index n_t = snapshots.rows();
  const Eigen::Index n = snapshots.cols();
  if (r < 1) throw ConfigError("POD dimension r must be >= 1");
  if (r > std::min(n_t, n)) {
    throw RankError("POD dimension " + std::to_string(r) + " exceeds min(N_t, n) = " +
                    std::to_string(std::min(n_t, n)));
  }
  Matrix basis(n, r);
  Vector sigma(r);
  if (n_t <= n) {
    // Method of snapshots: eigenvectors u of X X^T give directions X^T u / sigma.
    const SymmetricEigen eig = jacobi_eigen(snapshots * snapshots.transpose());
    for (int k = 0; k < r; ++k) {
      Vector direction = snapshots.transpose() * eig.vectors.col(k);
      sigma[k] = direction.norm();
      basis.col(k) = direction / std::max(sigma[k], 1e-300);
    }
  } else {
    const SymmetricEigen eig = jacobi_eigen(snapshots.transpose() * snapshots);
    for (int k = 0; k < r; ++k) {
      basis.col(k) = eig.vectors.col(k);
      sigma[k] = (snapshots * eig.vectors.col(k)).norm();
    }
  }
  // Singular values recomputed as ||X v|| keep absolute accuracy for the
  // small ones, which the Gram eigenvalues lose to squaring.
  if (!(sigma[r - 1] >= 1e-12 * sigma[0]) || sigma[0] == 0.0) {
    throw RankError("POD dimension " + std::to_string(r) + " exceeds the numerical rank");
  }
  // Re-orthonormalize (modified Gram-Schmidt) against round-off from the
  // snapshot mapping.
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < k; ++j) basis.col(k) -= basis.col(j).dot(basis.col(k)) * basis.col(j);
    basis.col(k).normalize();
  }
  return {std::move(basis), std::move(sigma)};
}

Matrix project(const PodBasis& basis, const Matrix& snapshots) {
  if (snapshots.cols() != basis.basis.rows()) {
    throw DimensionError("snapshot width does not match the POD basis");
  }
  return snapshots * basis.basis;
}

Matrix lift_linear(const PodBasis& basis, const Matrix& latent) {
  if (latent.cols() != basis.basis.cols()) {
    throw DimensionError("latent width does not match the POD dimension");
  }
  return latent * basis.basis.transpose();
}

Matrix estimate_derivatives(const Matrix& latent, double dt) {
  if (latent.rows() < 3) throw DatasetError("derivative estimation needs at least 3 rows");
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  const Eigen::Index m = latent.rows() - 2;
  return (latent.bottomRows(m) - latent.topRows(m)) / (2.0 * dt);
}

Matrix opinf_design(const Matrix& latent) {
  const Eigen::Index r = latent.cols();
  Matrix d(latent.rows(), r + r * r + 1);
  for (Eigen::Index i = 0; i < latent.rows(); ++i) {
    const Vector z = latent.row(i).transpose();
    d.row(i).head(r) = z.transpose();
    d.row(i).segment(r, r * r) = kron_sq(z).transpose();
    d(i, r + r * r) = 1.0;
  }
  return d;
}

QuadraticModel opinf_fit(const Matrix& latent, const Matrix& derivatives, double reg) {
  if (latent.rows() != derivatives.rows() || latent.cols() != derivatives.cols()) {
    throw DimensionError("latent and derivative matrices must have the same shape");
  }
  if (latent.rows() < 1) throw DimensionError("operator inference needs data");
  if (!(reg >= 0.0)) throw ConfigError("regularization must be non-negative");
  const Eigen::Index r = latent.cols();
  const Matrix d = opinf_design(latent);
  Matrix normal = d.transpose() * d;
  normal.diagonal().array() += reg;
  const Matrix rhs = d.transpose() * derivatives;

  Eigen::LDLT<Matrix> ldlt(normal);
  const double max_pivot = ldlt.vectorD().cwiseAbs().maxCoeff();
  const double min_pivot = ldlt.vectorD().cwiseAbs().minCoeff();
  // With reg > 0 the normal matrix is positive definite by construction.
  if (ldlt.info() != Eigen::Success || (reg == 0.0 && !(min_pivot > 1e-14 * max_pivot))) {
    throw ConditioningError(
        "operator-inference normal matrix is singular; use a positive regularization");
  }
  const Matrix theta = ldlt.solve(rhs);  // (r + r^2 + 1) x r
  Matrix A = theta.topRows(r).transpose();
  Matrix H = theta.middleRows(r, r * r).transpose();
  Vector b = theta.row(r + r * r).transpose();
  return QuadraticModel(std::move(A), std::move(H), std::move(b));
}

Vector opinf_residuals(const QuadraticModel& model, const Matrix& latent,
                       const Matrix& derivatives) {
  const Eigen::Index r = model.latent_dim();
  if (latent.cols() != r || derivatives.cols() != r || latent.rows() != derivatives.rows()) {
    throw DimensionError("residual inputs do not match the model");
  }
  Matrix theta(r + r * r + 1, r);
  theta.topRows(r) = model.A().transpose();
  theta.middleRows(r, r * r) = model.H().transpose();
  theta.row(r + r * r) = model.b().transpose();
  return (opinf_design(latent) * theta - derivatives).colwise().norm().transpose();
}

nn::Network LinearRom::encoder() const {
  return nn::Network({nn::DenseLayer{pod.basis.transpose(), Matrix::Zero(pod.r(), 1),
                                     nn::Activation::identity}});
}

nn::Network LinearRom::decoder() const {
  return nn::Network({nn::DenseLayer{pod.basis, Matrix::Zero(pod.basis.rows(), 1),
                                     nn::Activation::identity}});
}

LinearRom fit_linear_rom(const SnapshotDataset& ds, int r, double reg) {
  ds.validate();
  LinearRom rom;
  rom.pod = pod_basis(ds.snapshots, r);
  const Matrix latent = project(rom.pod, ds.snapshots);
  const Matrix derivs = estimate_derivatives(latent, ds.dt);
  rom.model = opinf_fit(latent.middleRows(1, latent.rows() - 2), derivs, reg);
  return rom;
}

}  // namespace qde
