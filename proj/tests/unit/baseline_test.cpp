#include <gtest/gtest.h>

#include <cmath>

#include "quadembed/baseline.hpp"
#include "quadembed/datagen.hpp"
#include "quadembed/errors.hpp"
#include "quadembed/rng.hpp"

namespace {

using qde::Matrix;
using qde::Vector;

Matrix random_matrix(qde::Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

TEST(JacobiEigen, MatchesEigenSolver) {
  qde::Rng rng(4);
  const Matrix a = random_matrix(rng, 12, 12);
  const Matrix sym = a * a.transpose();
  const auto ours = qde::jacobi_eigen(sym);
  Eigen::SelfAdjointEigenSolver<Matrix> ref(sym);
  for (int k = 0; k < 12; ++k) {
    EXPECT_NEAR(ours.values(k), ref.eigenvalues()(11 - k), 1e-10 * ref.eigenvalues().maxCoeff());
    const Vector v = ours.vectors.col(k);
    EXPECT_LT((sym * v - ours.values(k) * v).norm(), 1e-9 * ref.eigenvalues().maxCoeff());
  }
  EXPECT_LT((ours.vectors.transpose() * ours.vectors - Matrix::Identity(12, 12)).norm(), 1e-12);
}

TEST(Pod, RepeatedRow) {
  const Vector v = (Vector(3) << 1, 2, 2).finished();
  Matrix x(5, 3);
  for (int i = 0; i < 5; ++i) x.row(i) = v.transpose();
  const auto pod = qde::pod_basis(x, 1);
  EXPECT_NEAR(std::abs(pod.basis.col(0).dot(v / v.norm())), 1.0, 1e-12);
  EXPECT_NEAR(pod.singular_values(0), v.norm() * std::sqrt(5.0), 1e-12);
}

TEST(Pod, OrthogonalRows) {
  Matrix x = Matrix::Zero(2, 4);
  x(0, 0) = 1;
  x(1, 1) = 1;
  const auto pod = qde::pod_basis(x, 2);
  EXPECT_NEAR(pod.singular_values(0), pod.singular_values(1), 1e-14);
  const Matrix recon = qde::lift_linear(pod, qde::project(pod, x));
  EXPECT_LT((recon - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pod, FullRankProjectionIsIdentityOnData) {
  qde::Rng rng(1);
  for (auto [rows, cols] : {std::pair{6, 30}, std::pair{30, 6}}) {
    // rank 4
    const Matrix x = random_matrix(rng, rows, 4) * random_matrix(rng, 4, cols);
    const auto pod = qde::pod_basis(x, 4);
    const Matrix v = pod.basis;
    EXPECT_LT((x - x * v * v.transpose()).norm(), 1e-10 * x.norm());
    EXPECT_LT((v.transpose() * v - Matrix::Identity(4, 4)).norm(), 1e-10);
    EXPECT_THROW(qde::pod_basis(x, 5), qde::RankError);
  }
}

TEST(Pod, RangeChecks) {
  const Matrix x = Matrix::Random(4, 3);
  EXPECT_THROW(qde::pod_basis(x, 0), qde::ConfigError);
  EXPECT_THROW(qde::pod_basis(x, 4), qde::RankError);
  EXPECT_THROW(qde::pod_basis(Matrix::Zero(4, 3), 1), qde::RankError);
}

TEST(Pod, EckartYoungAgainstSvd) {
  qde::Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = random_matrix(rng, 20, 3) * random_matrix(rng, 3, 20) +
                     1e-2 * random_matrix(rng, 20, 20);
    Eigen::JacobiSVD<Matrix> svd(x);
    const Vector sigma = svd.singularValues();
    for (int r = 1; r <= 6; ++r) {
      const auto pod = qde::pod_basis(x, r);
      const double err = (x - x * pod.basis * pod.basis.transpose()).norm();
      EXPECT_NEAR(err, sigma.tail(20 - r).norm(), 1e-8);
      for (int k = 0; k < r; ++k) EXPECT_NEAR(pod.singular_values(k), sigma(k), 1e-9 * sigma(0));
    }
  }
}

TEST(Pod, SingularValuesSortedAndNested) {
  qde::Rng rng(3);
  const Matrix x = random_matrix(rng, 15, 40);
  const auto p3 = qde::pod_basis(x, 3);
  const auto p4 = qde::pod_basis(x, 4);
  for (int k = 1; k < 4; ++k) EXPECT_GE(p4.singular_values(k - 1), p4.singular_values(k));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(p3.basis.col(k).dot(p4.basis.col(k))), 1.0, 1e-10);
}

TEST(Project, Examples) {
  qde::Rng rng(5);
  const Vector v = random_matrix(rng, 6, 1);
  const Matrix x = random_matrix(rng, 8, 1) * v.transpose();
  const auto pod = qde::pod_basis(x, 1);
  EXPECT_LT((qde::lift_linear(pod, qde::project(pod, x)) - x).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(qde::project(pod, Matrix::Zero(3, 6)).isZero(0.0));
  const auto pod2 = qde::pod_basis(random_matrix(rng, 10, 6), 3);
  EXPECT_LT((qde::project(pod2, pod2.basis.transpose()) - Matrix::Identity(3, 3)).norm(), 1e-12);
  EXPECT_THROW(qde::project(pod2, Matrix::Zero(2, 5)), qde::DimensionError);
  EXPECT_THROW(qde::lift_linear(pod2, Matrix::Zero(2, 2)), qde::DimensionError);
}

TEST(Derivatives, Examples) {
  const double dt = 0.1;
  Matrix lin(6, 1), quad(3, 1), sine(3, 1);
  for (int i = 0; i < 6; ++i) lin(i, 0) = i * dt;
  const Matrix dl = qde::estimate_derivatives(lin, dt);
  ASSERT_EQ(dl.rows(), 4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(dl(i, 0), 1.0, 1e-14);
  quad << 0.81, 1.0, 1.21;
  EXPECT_NEAR(qde::estimate_derivatives(quad, dt)(0, 0), 2.0, 1e-14);
  sine << std::sin(-0.01), 0.0, std::sin(0.01);
  EXPECT_NEAR(qde::estimate_derivatives(sine, 0.01)(0, 0), 0.99998333, 1e-8);
  EXPECT_ANY_THROW(qde::estimate_derivatives(Matrix::Zero(2, 1), dt));
}

TEST(OpInf, LogisticRecoveredExactly) {
  const qde::QuadraticModel truth(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, -1.0),
                                  Vector::Zero(1));
  const auto traj = qde::rollout(truth, Vector::Constant(1, 0.1), 0.05, 100).as_matrix();
  Matrix derivs(traj.rows(), 1);
  for (Eigen::Index i = 0; i < traj.rows(); ++i) derivs(i, 0) = traj(i, 0) - traj(i, 0) * traj(i, 0);
  const auto fit = qde::opinf_fit(traj, derivs, 0.0);
  for (double z = -0.5; z <= 1.5; z += 0.1) {
    const Vector p = Vector::Constant(1, z);
    EXPECT_NEAR(qde::eval_rhs(fit, p)(0), qde::eval_rhs(truth, p)(0), 1e-8);
  }
}

TEST(OpInf, LiftedPendulumAction) {
  qde::PendulumParams params;
  params.T = 20.0;
  const auto ds = qde::make_lifted_pendulum_dataset(params);
  Matrix derivs(ds.n_steps(), 4);
  for (Eigen::Index i = 0; i < ds.n_steps(); ++i)
    derivs.row(i) = qde::pendulum_lifted_rhs(ds.snapshots.row(i).transpose()).transpose();
  const auto fit = qde::opinf_fit(ds.snapshots, derivs, 1e-10);
  qde::Rng rng(17);
  for (int k = 0; k < 100; ++k) {
    const double t = rng.uniform(0.0, 20.0);
    // off-grid states on the same orbit
    const auto probe = qde::simulate_ode(qde::pendulum_rhs, params.x0, t / 200.0, 200);
    const Vector z = qde::lift_pendulum(probe.snapshots.row(200).transpose());
    const Vector want = qde::pendulum_lifted_rhs(z);
    EXPECT_LT((qde::eval_rhs(fit, z) - want).norm(), 1e-6 * want.norm());
  }
}

TEST(OpInf, ConstantLatentIsEquilibrium) {
  const Matrix latent = Matrix::Constant(20, 2, 0.7);
  const auto fit = qde::opinf_fit(latent, Matrix::Zero(20, 2), 1e-8);
  EXPECT_LT(qde::eval_rhs(fit, Vector::Constant(2, 0.7)).norm(), 1e-6);
}

TEST(OpInf, SingularWithoutRegularization) {
  const Matrix latent = Matrix::Constant(20, 2, 0.7);
  EXPECT_THROW(qde::opinf_fit(latent, Matrix::Zero(20, 2), 0.0), qde::ConditioningError);
}

TEST(OpInf, ShapeChecks) {
  EXPECT_THROW(qde::opinf_fit(Matrix::Zero(5, 2), Matrix::Zero(4, 2), 1e-8), qde::DimensionError);
  EXPECT_THROW(qde::opinf_fit(Matrix::Zero(5, 2), Matrix::Zero(5, 3), 1e-8), qde::DimensionError);
  EXPECT_ANY_THROW(qde::opinf_fit(Matrix::Zero(5, 2), Matrix::Zero(5, 2), -1.0));
}

TEST(OpInf, DesignRows) {
  const Matrix z = (Matrix(1, 2) << 2, 3).finished();
  const Matrix d = qde::opinf_design(z);
  EXPECT_EQ(d, (Matrix(1, 7) << 2, 3, 4, 6, 6, 9, 1).finished());
}

TEST(OpInf, ResidualNonIncreasingInR) {
  qde::ReactorParams p;
  p.n_x = 20;
  p.T = 20;
  p.dt = 0.05;
  const auto ds = qde::normalize(qde::simulate_reactor(p)).dataset;
  Vector previous;
  for (int r = 1; r <= 4; ++r) {
    const auto pod = qde::pod_basis(ds.snapshots, r);
    const Matrix latent = qde::project(pod, ds.snapshots);
    const Matrix derivs = qde::estimate_derivatives(latent, ds.dt);
    const Matrix inner = latent.middleRows(1, latent.rows() - 2);
    const auto fit = qde::opinf_fit(inner, derivs, 1e-12);
    const Vector res = qde::opinf_residuals(fit, inner, derivs);
    ASSERT_EQ(res.size(), r);
    for (Eigen::Index k = 0; k < previous.size(); ++k) {
      EXPECT_LE(res(k), previous(k) * (1.0 + 1e-6) + 1e-12) << "r=" << r << " coord " << k;
    }
    previous = res;
  }
}

}  // namespace
