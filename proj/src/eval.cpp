#include "quadembed/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "quadembed/errors.hpp"
#include "quadembed/io.hpp"

namespace qde {

double relative_l2(const Vector& truth, const Vector& estimate) {
  return (truth - estimate).norm() / std::max(truth.norm(), 1e-12);
}

RolloutResult evaluate_rollout(const nn::Network& encoder, const nn::Network& decoder,
                               const QuadraticModel& model, const SnapshotDataset& ds) {
  ds.validate();
  if (encoder.input_dim() != ds.n_state() || decoder.output_dim() != ds.n_state()) {
    throw DimensionError("codec does not match the dataset state dimension");
  }
  if (encoder.output_dim() != model.latent_dim() || decoder.input_dim() != model.latent_dim()) {
    throw DimensionError("codec latent dimension does not match the model");
  }
  const Eigen::Index n_t = ds.n_steps();
  RolloutResult result;
  result.latent.dt = ds.dt;
  const Vector z0 = nn::predict(encoder, ds.snapshots.topRows(1)).row(0).transpose();
  result.latent.states.push_back({z0, ds.t0});
  for (Eigen::Index k = 1; k < n_t; ++k) {
    try {
      Vector next = rk4_step(model, result.latent.states.back().z, ds.dt);
      result.latent.states.push_back({std::move(next), ds.t0 + static_cast<double>(k) * ds.dt});
    } catch (const DivergenceError&) {
      result.diverged = true;
      result.failed_step = static_cast<long>(k);
      break;
    }
  }
  Matrix decoded = nn::predict(decoder, result.latent.as_matrix());
  const auto computed = static_cast<Eigen::Index>(result.latent.size());
  result.per_time_error.resize(computed);
  for (Eigen::Index i = 0; i < computed; ++i) {
    const Vector truth = ds.snapshots.row(i).transpose();
    const Vector estimate = decoded.row(i).transpose();
    double err = relative_l2(truth, estimate);
    if (!std::isfinite(err)) {
      // Latent state finite but decoded overflowed: treat as divergence here.
      result.diverged = true;
      result.failed_step = static_cast<long>(i);
      result.latent.states.resize(static_cast<std::size_t>(i));
      decoded.conservativeResize(i, Eigen::NoChange);
      result.per_time_error.conservativeResize(i);
      break;
    }
    result.per_time_error[i] = err;
  }
  result.decoded = std::move(decoded);
  if (result.per_time_error.size() > 0) {
    result.summary.mean_rel_l2 = result.per_time_error.mean();
    result.summary.max_rel_l2 = result.per_time_error.maxCoeff();
  }
  const Matrix round_trip = nn::predict(decoder, nn::predict(encoder, ds.snapshots));
  result.summary.recon_mse =
      (round_trip - ds.snapshots).squaredNorm() / static_cast<double>(ds.snapshots.size());
  return result;
}

std::string MetricsTable::to_csv() const {
  std::string out = "model,mean_rel_l2,max_rel_l2,recon_mse,diverged\n";
  char line[512];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%d\n", r.name.c_str(),
                  r.summary.mean_rel_l2, r.summary.max_rel_l2, r.summary.recon_mse,
                  r.diverged ? 1 : 0);
    out += line;
  }
  return out;
}

MetricsTable compare(const std::vector<std::pair<std::string, RolloutResult>>& models) {
  MetricsTable table;
  Eigen::Index width = -1;
  for (const auto& [name, result] : models) {
    if (width < 0) width = result.decoded.cols();
    if (result.decoded.cols() != width) {
      throw DimensionError("results were computed on datasets of different widths");
    }
    table.rows.push_back({name, result.summary, result.diverged});
  }
  // Non-diverged results cover the full dataset and must agree in length.
  Eigen::Index length = -1;
  for (const auto& [name, result] : models) {
    if (result.diverged) continue;
    if (length < 0) length = result.decoded.rows();
    if (result.decoded.rows() != length) {
      throw DimensionError("results were computed on datasets of different lengths");
    }
  }
  return table;
}

std::filesystem::path export_trajectory(const RolloutResult& result,
                                        const SnapshotDataset& reference,
                                        const std::filesystem::path& csv_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot open " + csv_path.string() + " for writing");
  const Eigen::Index latent_dim =
      result.latent.states.empty() ? 0 : result.latent.states.front().z.size();
  csv << "t";
  for (Eigen::Index k = 0; k < latent_dim; ++k) csv << ",z_" << (k + 1);
  csv << ",err\n";
  char buf[64];
  for (std::size_t i = 0; i < result.latent.states.size(); ++i) {
    const auto& s = result.latent.states[i];
    std::snprintf(buf, sizeof(buf), "%.17g", s.t);
    csv << buf;
    for (Eigen::Index k = 0; k < latent_dim; ++k) {
      std::snprintf(buf, sizeof(buf), ",%.17g", s.z[k]);
      csv << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g\n", result.per_time_error[static_cast<Eigen::Index>(i)]);
    csv << buf;
  }
  if (!csv) throw IoError("failed writing " + csv_path.string());

  SnapshotDataset decoded;
  decoded.snapshots = result.decoded;
  decoded.dt = reference.dt;
  decoded.t0 = reference.t0;
  decoded.fields = reference.fields;
  decoded.normalization = reference.normalization;
  std::filesystem::path qdset_path = csv_path;
  qdset_path.replace_extension(".qdset");
  write_qdset(qdset_path, decoded);
  return qdset_path;
}

}  // namespace qde
