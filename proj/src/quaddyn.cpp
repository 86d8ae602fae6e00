#include "quadembed/quaddyn.hpp"

#include <cmath>
#include <string>

#include "quadembed/errors.hpp"

namespace qde {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

void check_dim(const QuadraticModel& model, const Vector& z) {
  if (z.size() != model.latent_dim()) {
    throw DimensionError("latent state has length " + std::to_string(z.size()) +
                         ", model expects " + std::to_string(model.latent_dim()));
  }
}

Vector rhs_unchecked(const QuadraticModel& model, const Vector& z) {
  return model.A() * z + model.H() * kron_sq(z) + model.b();
}

Vector rk4_signed(const QuadraticModel& model, const Vector& z, double h) {
  check_dim(model, z);
  auto stage = [&](const Vector& at, int index) {
    Vector k = rhs_unchecked(model, at);
    if (!all_finite(k)) {
      throw DivergenceError("non-finite RK4 stage " + std::to_string(index), index);
    }
    return k;
  };
  const Vector k1 = stage(z, 1);
  const Vector k2 = stage(z + (0.5 * h) * k1, 2);
  const Vector k3 = stage(z + (0.5 * h) * k2, 3);
  const Vector k4 = stage(z + h * k3, 4);
  Vector next = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!all_finite(next)) {
    throw DivergenceError("non-finite RK4 update", 4);
  }
  return next;
}

void check_step(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw DomainError("RK4 step must be positive and finite");
  }
}

}  // namespace

QuadraticModel::QuadraticModel(Matrix A, Matrix H, Vector b)
    : A_(std::move(A)), H_(std::move(H)), b_(std::move(b)) {
  const Eigen::Index n = b_.size();
  if (n < 1) {
    throw DimensionError("latent dimension must be at least 1");
  }
  if (A_.rows() != n || A_.cols() != n) {
    throw DimensionError("A must be n x n");
  }
  if (H_.rows() != n || H_.cols() != n * n) {
    throw DimensionError("H must be n x n^2");
  }
  if (!A_.allFinite() || !H_.allFinite() || !b_.allFinite()) {
    throw DomainError("quadratic model has non-finite entries");
  }
}

QuadraticModel QuadraticModel::zeros(int latent_dim) {
  if (latent_dim < 1) {
    throw DimensionError("latent dimension must be at least 1");
  }
  const Eigen::Index n = latent_dim;
  return QuadraticModel(Matrix::Zero(n, n), Matrix::Zero(n, n * n), Vector::Zero(n));
}

Matrix LatentTrajectory::as_matrix() const {
  if (states.empty()) return Matrix();
  Matrix out(static_cast<Eigen::Index>(states.size()), states.front().z.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = states[i].z.transpose();
  }
  return out;
}

Vector kron_sq(const Vector& z) {
  const Eigen::Index n = z.size();
  if (n == 0) {
    throw DimensionError("kron_sq of an empty vector");
  }
  Vector w(n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w.segment(i * n, n) = z[i] * z;
  }
  return w;
}

Vector eval_rhs(const QuadraticModel& model, const Vector& z) {
  check_dim(model, z);
  Vector out = rhs_unchecked(model, z);
  if (!all_finite(out)) {
    throw OverflowError("quadratic right-hand side is not finite");
  }
  return out;
}

Vector rk4_step(const QuadraticModel& model, const Vector& z, double h) {
  check_step(h);
  return rk4_signed(model, z, h);
}

Vector rk4_step_back(const QuadraticModel& model, const Vector& z, double h) {
  check_step(h);
  return rk4_signed(model, z, -h);
}

LatentTrajectory rollout(const QuadraticModel& model, const Vector& z0, double h,
                         int steps, double t0) {
  check_step(h);
  if (steps < 1) {
    throw DomainError("rollout needs at least one step");
  }
  check_dim(model, z0);
  LatentTrajectory traj;
  traj.dt = h;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.push_back({z0, t0});
  for (int k = 1; k <= steps; ++k) {
    try {
      Vector next = rk4_signed(model, traj.states.back().z, h);
      traj.states.push_back({std::move(next), t0 + k * h});
    } catch (const DivergenceError& e) {
      throw DivergenceError("rollout diverged at step " + std::to_string(k) + ": " + e.what(),
                            e.stage(), k);
    }
  }
  return traj;
}

}  // namespace qde
