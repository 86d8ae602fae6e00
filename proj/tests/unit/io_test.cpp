#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "quadembed/errors.hpp"
#include "quadembed/io.hpp"

namespace {

using namespace qde;

SnapshotDataset sample_dataset() {
  SnapshotDataset ds;
  ds.snapshots = Matrix::Random(7, 5);
  ds.snapshots(2, 3) = 1.0 / 3.0;
  ds.dt = 0.05;
  ds.t0 = 1.25;
  ds.fields = {{"psi", 0, 2}, {"theta", 2, 3}};
  return ds;
}

std::string to_bytes(const SnapshotDataset& ds) {
  std::ostringstream out(std::ios::binary);
  write_qdset(out, ds);
  return out.str();
}

SnapshotDataset from_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_qdset(in);
}

TEST(Qdset, RoundTripBitwise) {
  const SnapshotDataset ds = sample_dataset();
  const SnapshotDataset back = from_bytes(to_bytes(ds));
  EXPECT_EQ(back.snapshots, ds.snapshots);
  EXPECT_EQ(back.dt, ds.dt);
  EXPECT_EQ(back.t0, ds.t0);
  ASSERT_EQ(back.fields.size(), 2u);
  EXPECT_EQ(back.fields[1].name, "theta");
  EXPECT_EQ(back.fields[1].offset, 2);
  EXPECT_EQ(back.fields[1].length, 3);
  EXPECT_FALSE(back.normalization.has_value());
}

TEST(Qdset, NormalizationRoundTrip) {
  const Normalized n = normalize(sample_dataset());
  const SnapshotDataset back = from_bytes(to_bytes(n.dataset));
  ASSERT_TRUE(back.normalization.has_value());
  EXPECT_EQ((*back.normalization)[1].min, n.scaler.ranges[1].min);
  EXPECT_EQ((*back.normalization)[1].max, n.scaler.ranges[1].max);
  EXPECT_EQ(back.snapshots, n.dataset.snapshots);
}

TEST(Qdset, LayoutIsMagicHeaderPayload) {
  const SnapshotDataset ds = sample_dataset();
  const std::string bytes = to_bytes(ds);
  EXPECT_EQ(bytes.substr(0, 6), "QDSET\n");
  const auto header_end = bytes.find('\n', 6);
  const auto header = nlohmann::json::parse(bytes.substr(6, header_end - 6));
  EXPECT_EQ(header["n_state"], 5);
  EXPECT_EQ(header["n_steps"], 7);
  EXPECT_EQ(bytes.size() - header_end - 1, 7u * 5u * 8u);
  double first;
  std::memcpy(&first, bytes.data() + header_end + 1, 8);
  EXPECT_EQ(first, ds.snapshots(0, 0));
  double second;
  std::memcpy(&second, bytes.data() + header_end + 9, 8);
  EXPECT_EQ(second, ds.snapshots(0, 1));  // row-major
}

TEST(Qdset, Corruption) {
  const std::string bytes = to_bytes(sample_dataset());
  EXPECT_THROW(from_bytes(bytes.substr(0, bytes.size() - 8)), ParseError);
  EXPECT_THROW(from_bytes(bytes + "x"), ParseError);
  EXPECT_THROW(from_bytes("QDSXT\n" + bytes.substr(6)), ParseError);
  EXPECT_THROW(from_bytes("QDSET\n{not json\n"), ParseError);
  EXPECT_THROW(from_bytes("QDSET\n{\"version\":1}\n"), ParseError);
  EXPECT_THROW(from_bytes(""), ParseError);
}

TEST(Qdset, MissingFile) {
  EXPECT_THROW(read_qdset(std::filesystem::path("/nonexistent/x.qdset")), IoError);
}

Checkpoint sample_checkpoint() {
  Rng rng(5);
  Checkpoint c;
  c.encoder = nn::init_network({{5, 4, 2}, nn::Activation::elu, nn::Activation::identity, true}, rng);
  c.encoder.norm()->running_mean << 0.1, -0.2;
  c.encoder.norm()->running_var << 2.0, 0.5;
  c.encoder.set_mode(nn::NormMode::eval);
  c.decoder = nn::init_network({{2, 4, 5}}, rng);
  c.decoder.layers()[1].bias(3, 0) = 0.7;
  Matrix A = Matrix::Random(2, 2), H = Matrix::Random(2, 4);
  c.model = QuadraticModel(A, H, Vector::Random(2));
  c.scaler = normalize(sample_dataset()).scaler;
  c.config = {{"seed", 42}, {"training", {{"epochs", 3}}}};
  return c;
}

Checkpoint ckpt_round_trip(const Checkpoint& c, std::string* raw = nullptr) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, c);
  if (raw) *raw = out.str();
  std::istringstream in(out.str(), std::ios::binary);
  return read_checkpoint(in);
}

TEST(Checkpoint, RoundTripBitwise) {
  const Checkpoint c = sample_checkpoint();
  std::string raw;
  const Checkpoint back = ckpt_round_trip(c, &raw);
  EXPECT_EQ(raw.substr(0, 6), "QCKPT\n");
  EXPECT_EQ(back.kind, "learned");
  ASSERT_EQ(back.encoder.layers().size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.encoder.layers()[i].weights, c.encoder.layers()[i].weights);
    EXPECT_EQ(back.encoder.layers()[i].bias, c.encoder.layers()[i].bias);
    EXPECT_EQ(back.encoder.layers()[i].activation, c.encoder.layers()[i].activation);
    EXPECT_EQ(back.decoder.layers()[i].weights, c.decoder.layers()[i].weights);
    EXPECT_EQ(back.decoder.layers()[i].bias, c.decoder.layers()[i].bias);
  }
  ASSERT_TRUE(back.encoder.norm().has_value());
  EXPECT_EQ(back.encoder.norm()->running_mean, c.encoder.norm()->running_mean);
  EXPECT_EQ(back.encoder.norm()->running_var, c.encoder.norm()->running_var);
  EXPECT_FALSE(back.decoder.norm().has_value());
  EXPECT_EQ(back.model.A(), c.model.A());
  EXPECT_EQ(back.model.H(), c.model.H());
  EXPECT_EQ(back.model.b(), c.model.b());
  ASSERT_TRUE(back.scaler.has_value());
  EXPECT_EQ(back.scaler->ranges[0].max, c.scaler->ranges[0].max);
  EXPECT_EQ(back.config, c.config);

  // Serializing the loaded checkpoint reproduces the bytes.
  std::string again;
  ckpt_round_trip(back, &again);
  EXPECT_EQ(again, raw);
}

TEST(Checkpoint, LoadedNetworkPredictsIdentically) {
  const Checkpoint c = sample_checkpoint();
  const Checkpoint back = ckpt_round_trip(c);
  const Matrix x = Matrix::Random(3, 5);
  EXPECT_EQ(nn::predict(back.encoder, x), nn::predict(c.encoder, x));
}

TEST(Checkpoint, Corruption) {
  std::string raw;
  ckpt_round_trip(sample_checkpoint(), &raw);
  auto load = [](const std::string& bytes) {
    std::istringstream in(bytes, std::ios::binary);
    return read_checkpoint(in);
  };
  EXPECT_THROW(load(raw.substr(0, raw.size() - 1)), ParseError);
  EXPECT_THROW(load(raw + std::string(1, '\0')), ParseError);
  EXPECT_THROW(load("QDSET\n" + raw.substr(6)), ParseError);
  auto header_end = raw.find('\n', 6);
  auto header = nlohmann::json::parse(raw.substr(6, header_end - 6));
  header["latent_dim"] = 3;
  EXPECT_THROW(load("QCKPT\n" + header.dump() + "\n" + raw.substr(header_end + 1)), ParseError);
}

}  // namespace
