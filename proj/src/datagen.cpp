#include "quadembed/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "quadembed/errors.hpp"

namespace qde {

// ---------------------------------------------------------------- datasets

void SnapshotDataset::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw DatasetError("dataset dt must be positive");
  if (!std::isfinite(t0)) throw DatasetError("dataset t0 must be finite");
  if (fields.empty()) throw DatasetError("dataset has no fields");
  Eigen::Index expected = 0;
  for (const auto& f : fields) {
    if (f.offset != expected || f.length <= 0) {
      throw DatasetError("field '" + f.name + "' does not tile the state vector");
    }
    expected += f.length;
  }
  if (expected != n_state()) {
    throw DatasetError("fields cover " + std::to_string(expected) + " entries, state has " +
                       std::to_string(n_state()));
  }
  if (normalization && normalization->size() != fields.size()) {
    throw DatasetError("normalization must list one range per field");
  }
  if (!snapshots.allFinite()) throw DatasetError("dataset contains non-finite values");
}

Matrix Scaler::apply(const Matrix& raw) const {
  Matrix out = raw;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const auto& f = fields[k];
    const double span = ranges[k].max - ranges[k].min;
    out.middleCols(f.offset, f.length) =
        (raw.middleCols(f.offset, f.length).array() - ranges[k].min) / span;
  }
  return out;
}

Matrix Scaler::invert(const Matrix& normalized) const {
  Matrix out = normalized;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    const auto& f = fields[k];
    const double span = ranges[k].max - ranges[k].min;
    out.middleCols(f.offset, f.length) =
        normalized.middleCols(f.offset, f.length).array() * span + ranges[k].min;
  }
  return out;
}

Normalized normalize(const SnapshotDataset& ds) {
  ds.validate();
  if (ds.normalization) throw DatasetError("dataset is already normalized");
  Scaler scaler;
  scaler.fields = ds.fields;
  for (const auto& f : ds.fields) {
    const auto block = ds.snapshots.middleCols(f.offset, f.length);
    const double lo = block.minCoeff();
    const double hi = block.maxCoeff();
    if (!(hi > lo)) throw DatasetError("field '" + f.name + "' is constant; cannot normalize");
    scaler.ranges.push_back({lo, hi});
  }
  SnapshotDataset out = ds;
  out.snapshots = scaler.apply(ds.snapshots);
  // Guard against 1-ulp excursions outside [0, 1] from the affine map.
  out.snapshots = out.snapshots.cwiseMax(0.0).cwiseMin(1.0);
  out.normalization = scaler.ranges;
  return {std::move(out), std::move(scaler)};
}

SnapshotDataset denormalize(const SnapshotDataset& ds, const Scaler& scaler) {
  SnapshotDataset out = ds;
  out.snapshots = scaler.invert(ds.snapshots);
  out.normalization.reset();
  return out;
}

Scaler scaler_of(const SnapshotDataset& ds) {
  if (!ds.normalization) throw DatasetError("dataset carries no normalization");
  return Scaler{ds.fields, *ds.normalization};
}

std::vector<Triplet> make_triplets(const SnapshotDataset& ds) {
  const Eigen::Index n = ds.n_steps();
  if (n < 3) {
    throw DatasetError("dataset too short: need at least 3 snapshots, have " + std::to_string(n));
  }
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(n - 2));
  for (Eigen::Index i = 1; i + 1 < n; ++i) out.push_back({i - 1, i, i + 1});
  return out;
}

// ---------------------------------------------------------------- pendulum

Vector pendulum_rhs(const Vector& x) {
  if (x.size() != 2) throw DimensionError("pendulum state has two entries");
  return (Vector(2) << -std::sin(x[1]), x[0]).finished();
}

Vector lift_pendulum(const Vector& x) {
  if (x.size() != 2) throw DimensionError("pendulum state has two entries");
  return (Vector(4) << x[0], x[1], std::sin(x[1]), std::cos(x[1])).finished();
}

Vector unlift_pendulum(const Vector& z) {
  if (z.size() != 4) throw DimensionError("lifted pendulum state has four entries");
  return z.head(2);
}

Vector pendulum_lifted_rhs(const Vector& z) {
  if (z.size() != 4) throw DimensionError("lifted pendulum state has four entries");
  return (Vector(4) << -z[2], z[0], z[0] * z[3], -z[0] * z[2]).finished();
}

QuadraticModel pendulum_lifted_model() {
  Matrix A = Matrix::Zero(4, 4);
  A(0, 2) = -1.0;
  A(1, 0) = 1.0;
  Matrix H = Matrix::Zero(4, 16);
  H(2, 0 * 4 + 3) = 1.0;   // z1 z4
  H(3, 0 * 4 + 2) = -1.0;  // -z1 z3
  return QuadraticModel(std::move(A), std::move(H), Vector::Zero(4));
}

SnapshotDataset simulate_ode(const VectorField& rhs, const Vector& x0, double h, int steps) {
  if (!(h > 0.0)) throw DomainError("step must be positive");
  if (steps < 2) throw DomainError("simulate_ode needs at least two steps");
  SnapshotDataset ds;
  ds.dt = h;
  ds.snapshots.resize(steps + 1, x0.size());
  ds.fields = {{"x", 0, x0.size()}};
  Vector x = x0;
  ds.snapshots.row(0) = x.transpose();
  for (int k = 1; k <= steps; ++k) {
    const Vector k1 = rhs(x);
    const Vector k2 = rhs(x + 0.5 * h * k1);
    const Vector k3 = rhs(x + 0.5 * h * k2);
    const Vector k4 = rhs(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      throw DivergenceError("simulation diverged at step " + std::to_string(k), -1, k);
    }
    ds.snapshots.row(k) = x.transpose();
  }
  return ds;
}

namespace {

int step_count(double T, double h) {
  if (!(h > 0.0) || !(T > 0.0)) throw ConfigError("T and h must be positive");
  const double n = T / h;
  const long rounded = std::lround(n);
  if (std::abs(n - static_cast<double>(rounded)) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("T must be an integer multiple of the step");
  }
  return static_cast<int>(rounded);
}

}  // namespace

SnapshotDataset make_pendulum_dataset(const PendulumParams& params) {
  if (params.x0.size() != 2) throw ConfigError("pendulum x0 has two entries");
  SnapshotDataset ds =
      simulate_ode(pendulum_rhs, params.x0, params.h, step_count(params.T, params.h));
  ds.fields = {{"x1", 0, 1}, {"x2", 1, 1}};
  return ds;
}

SnapshotDataset make_lifted_pendulum_dataset(const PendulumParams& params) {
  SnapshotDataset base = make_pendulum_dataset(params);
  SnapshotDataset ds;
  ds.dt = base.dt;
  ds.t0 = base.t0;
  ds.snapshots.resize(base.n_steps(), 4);
  for (Eigen::Index i = 0; i < base.n_steps(); ++i) {
    ds.snapshots.row(i) = lift_pendulum(base.snapshots.row(i).transpose()).transpose();
  }
  ds.fields = {{"z1", 0, 1}, {"z2", 1, 1}, {"z3", 2, 1}, {"z4", 3, 1}};
  return ds;
}

// ---------------------------------------------------------------- reactor

double arrhenius(double psi, double theta, double gamma) {
  if (!(theta > 0.0)) throw DomainError("Arrhenius term needs theta > 0");
  return psi * std::exp(gamma - gamma / theta);
}

void ReactorParams::validate() const {
  if (!(D >= 0.0)) throw ConfigError("reactor D must be >= 0");
  if (!(Pe > 0.0)) throw ConfigError("reactor Pe must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("reactor gamma must be > 0");
  if (n_x < 3) throw ConfigError("reactor n_x must be >= 3");
  if (!(T > 0.0) || !(dt > 0.0)) throw ConfigError("reactor T and dt must be positive");
  if (dt_sim < 0.0) throw ConfigError("reactor dt_sim must be >= 0");
  if (dt_sim > stable_step() * (1.0 + 1e-12)) {
    throw ConfigError("reactor dt_sim exceeds the explicit diffusion bound 0.4*Pe*dx^2");
  }
}

Vector reactor_rhs(const ReactorParams& p, const Vector& state) {
  const int n = p.n_x;
  if (state.size() != 2 * n) throw DimensionError("reactor state has 2*n_x entries");
  const double dx = p.dx();
  const double a = p.Pe * dx;
  const double diff = 1.0 / (p.Pe * dx * dx);
  Vector out(2 * n);
  for (int k = 0; k < n; ++k) {
    const double theta = state[n + k];
    if (!(theta > 0.0)) throw DivergenceError("reactor temperature left the physical range", -1);
    const double reaction = p.D * arrhenius(state[k], theta, p.gamma);
    for (int f = 0; f < 2; ++f) {
      const double* v = state.data() + f * n;
      // Danckwerts inflow (1/Pe) v_x = v - 1 at x = 0, zero gradient at x = 1.
      const double left = k == 0 ? (v[0] + a) / (1.0 + a) : v[k - 1];
      const double right = k == n - 1 ? v[n - 1] : v[k + 1];
      double r = diff * (right - 2.0 * v[k] + left) - (v[k] - left) / dx;
      r += f == 0 ? -reaction : -2.5 * (v[k] - 1.0) + 0.5 * reaction;
      out[f * n + k] = r;
    }
  }
  return out;
}

SnapshotDataset simulate_reactor(const ReactorParams& p) {
  p.validate();
  const int samples = step_count(p.T, p.dt);
  const double target = p.dt_sim > 0.0 ? p.dt_sim : p.stable_step();
  const int sub = static_cast<int>(std::ceil(p.dt / target - 1e-12));
  const double h = p.dt / sub;
  const int n = p.n_x;

  SnapshotDataset ds;
  ds.dt = p.dt;
  ds.fields = {{"psi", 0, n}, {"theta", n, n}};
  ds.snapshots.resize(samples + 1, 2 * n);
  Vector y = Vector::Ones(2 * n);
  ds.snapshots.row(0) = y.transpose();
  long step = 0;
  for (int s = 1; s <= samples; ++s) {
    for (int k = 0; k < sub; ++k, ++step) {
      const Vector k1 = reactor_rhs(p, y);
      const Vector k2 = reactor_rhs(p, y + 0.5 * h * k1);
      const Vector k3 = reactor_rhs(p, y + 0.5 * h * k2);
      const Vector k4 = reactor_rhs(p, y + h * k3);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!y.allFinite() || y.cwiseAbs().maxCoeff() > 1e6) {
        throw DivergenceError("reactor simulation diverged at solver step " + std::to_string(step),
                              -1, step);
      }
    }
    ds.snapshots.row(s) = y.transpose();
  }
  return ds;
}

// ---------------------------------------------------------------- Burgers

void BurgersParams::validate() const {
  if (!(hi > lo)) throw ConfigError("Burgers domain must have hi > lo");
  if (n_cells < 16) throw ConfigError("Burgers n_cells must be >= 16");
  if (n_cells_y < 0) throw ConfigError("Burgers n_cells_y must be >= 0");
  if (!(T > 0.0)) throw ConfigError("Burgers T must be positive");
  if (n_snapshots < 3) throw ConfigError("Burgers n_snapshots must be >= 3");
  if (!(cfl > 0.0 && cfl <= 0.9)) throw ConfigError("Burgers cfl must lie in (0, 0.9]");
}

namespace {

inline double rusanov(double left, double right) {
  const double a = std::max(std::abs(left), std::abs(right));
  return 0.25 * (left * left + right * right) - 0.5 * a * (right - left);
}

// One conservative forward-Euler sweep along a line of `count` cells with
// stride `stride`. The upstream ghost holds `inflow`, the downstream ghost
// copies the last cell (zero-gradient outflow).
void sweep_line(double* u, int count, int stride, double ratio, double inflow,
                std::vector<double>& flux) {
  flux.resize(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i <= count; ++i) {
    const double l = i == 0 ? inflow : u[static_cast<std::ptrdiff_t>(i - 1) * stride];
    const double r = u[static_cast<std::ptrdiff_t>(std::min(i, count - 1)) * stride];
    flux[i] = rusanov(l, r);
  }
  for (int i = 0; i < count; ++i) {
    u[static_cast<std::ptrdiff_t>(i) * stride] -= ratio * (flux[i + 1] - flux[i]);
  }
}

}  // namespace

SnapshotDataset simulate_burgers2d(const BurgersParams& p) {
  p.validate();
  const int nx = p.nx();
  const int ny = p.ny();
  const double dx = p.dx();
  const double dy = p.dy();
  Vector u(static_cast<Eigen::Index>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double value;
      if (p.constant_initial) {
        value = *p.constant_initial;
      } else {
        const double x = p.center_x(i);
        const double y = p.center_y(j);
        const bool in_x = x >= 0.0 && x <= 0.5;
        const bool in_y = ny == 1 || (y >= 0.0 && y <= 0.5);
        value = in_x && in_y ? 1.0 : 0.0;
      }
      u[static_cast<Eigen::Index>(j) * nx + i] = value;
    }
  }

  SnapshotDataset ds;
  ds.dt = p.T / (p.n_snapshots - 1);
  ds.fields = {{"u", 0, u.size()}};
  ds.snapshots.resize(p.n_snapshots, u.size());
  ds.snapshots.row(0) = u.transpose();

  // Characteristics enter through the lower faces, which keep the initial
  // boundary state.
  const Vector u_init = u;
  std::vector<double> flux;
  const double h_min = std::min(dx, ny == 1 ? dx : dy);
  double t = 0.0;
  long step = 0;
  for (int s = 1; s < p.n_snapshots; ++s) {
    const double t_target = s * ds.dt;
    while (t < t_target) {
      const double speed = u.cwiseAbs().maxCoeff();
      double dt = speed > 0.0 ? p.cfl * h_min / speed : t_target - t;
      // Clamp so that solver steps land exactly on the snapshot time.
      if (t + dt >= t_target - 1e-14 * std::max(1.0, t_target)) dt = t_target - t;
      const bool x_first = step % 2 == 0;
      for (int pass = 0; pass < 2; ++pass) {
        const bool along_x = (pass == 0) == x_first;
        if (along_x) {
          for (int j = 0; j < ny; ++j) {
            const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(j) * nx;
            sweep_line(u.data() + row, nx, 1, dt / dx, u_init[row], flux);
          }
        } else if (ny > 1) {
          for (int i = 0; i < nx; ++i) sweep_line(u.data() + i, ny, nx, dt / dy, u_init[i], flux);
        }
      }
      if (!u.allFinite() || u.cwiseAbs().maxCoeff() > 1e6) {
        throw DivergenceError("Burgers solver blew up at step " + std::to_string(step), -1, step);
      }
      t = (dt == t_target - t) ? t_target : t + dt;
      ++step;
    }
    ds.snapshots.row(s) = u.transpose();
  }
  return ds;
}

}  // namespace qde
