#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "quadembed/datagen.hpp"
#include "quadembed/network.hpp"
#include "quadembed/quaddyn.hpp"

namespace qde {

// QDSET: "QDSET\n", one JSON header line, then n_steps * n_state
// little-endian float64 values, time-major row-major.

void write_qdset(std::ostream& out, const SnapshotDataset& ds);
void write_qdset(const std::filesystem::path& path, const SnapshotDataset& ds);
/// Throws ParseError on a bad magic, malformed header or payload length mismatch.
SnapshotDataset read_qdset(std::istream& in);
SnapshotDataset read_qdset(const std::filesystem::path& path);

// QCKPT: "QCKPT\n", one JSON header line listing named arrays and their
// shapes, then the arrays as little-endian float64 in header order.

struct Checkpoint {
  /// "learned" for trained autoencoders, "linear" for POD codecs.
  std::string kind = "learned";
  nn::Network encoder;
  nn::Network decoder;
  QuadraticModel model = QuadraticModel::zeros(1);
  /// Scaler of the training data, when known.
  std::optional<Scaler> scaler;
  /// Free-form echo of the producing configuration.
  nlohmann::json config = nlohmann::json::object();
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Writes `text` to `path` byte for byte.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace qde
