#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "quadembed/datagen.hpp"
#include "quadembed/network.hpp"
#include "quadembed/quaddyn.hpp"

namespace qde {

struct RolloutSummary {
  double mean_rel_l2 = 0.0;
  double max_rel_l2 = 0.0;
  /// Autoencoder round-trip MSE over the whole dataset (no dynamics).
  double recon_mse = 0.0;
};

struct RolloutResult {
  LatentTrajectory latent;
  /// Rows = decoded states; fewer than N_t rows when the rollout diverged.
  Matrix decoded;
  Vector per_time_error;
  RolloutSummary summary;
  bool diverged = false;
  long failed_step = -1;
};

/// Encodes the first snapshot, integrates the model for N_t - 1 steps of
/// ds.dt and decodes every latent state. Errors are relative L2 per snapshot
/// in the dataset's (normalized) coordinates. A divergent rollout yields the
/// partial result with `diverged` set.
RolloutResult evaluate_rollout(const nn::Network& encoder, const nn::Network& decoder,
                               const QuadraticModel& model, const SnapshotDataset& ds);

/// ||x - x_hat|| / max(||x||, 1e-12).
double relative_l2(const Vector& truth, const Vector& estimate);

struct MetricsRow {
  std::string name;
  RolloutSummary summary;
  bool diverged = false;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  /// Header model,mean_rel_l2,max_rel_l2,recon_mse,diverged.
  std::string to_csv() const;
};

/// One row per model. Throws DimensionError when the results were produced on
/// datasets of different shapes.
MetricsTable compare(const std::vector<std::pair<std::string, RolloutResult>>& models);

/// Writes `csv_path` (columns t, z_1..z_n, err) and the decoded states as a
/// QDSET file next to it (same stem, .qdset extension) using the field layout
/// of `reference`. Returns the QDSET path.
std::filesystem::path export_trajectory(const RolloutResult& result,
                                        const SnapshotDataset& reference,
                                        const std::filesystem::path& csv_path);

}  // namespace qde
