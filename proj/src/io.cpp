#include "quadembed/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "quadembed/errors.hpp"

namespace qde {

using nlohmann::json;

namespace {

constexpr char kQdsetMagic[] = "QDSET\n";
constexpr char kCkptMagic[] = "QCKPT\n";
constexpr std::size_t kMagicLen = 6;

void write_f64(std::ostream& out, const double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, data + i, 8);
      bits = __builtin_bswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), 8);
    }
  }
}

void read_f64(std::istream& in, double* data, std::size_t count, const char* what) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
    throw ParseError(std::string(what) + ": payload is truncated");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, data + i, 8);
      bits = __builtin_bswap64(bits);
      std::memcpy(data + i, &bits, 8);
    }
  }
}

// Row-major payload of an Eigen (column-major) matrix.
void write_matrix(std::ostream& out, const Matrix& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  write_f64(out, rm.data(), static_cast<std::size_t>(rm.size()));
}

Matrix read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, const char* what) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  read_f64(in, rm.data(), static_cast<std::size_t>(rm.size()), what);
  return rm;
}

void expect_magic(std::istream& in, const char* magic, const char* what) {
  char buf[kMagicLen];
  in.read(buf, kMagicLen);
  if (in.gcount() != static_cast<std::streamsize>(kMagicLen) ||
      std::memcmp(buf, magic, kMagicLen) != 0) {
    throw ParseError(std::string(what) + ": bad magic bytes");
  }
}

json read_header(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(std::string(what) + ": missing header line");
  try {
    json header = json::parse(line);
    if (!header.is_object()) throw ParseError(std::string(what) + ": header is not an object");
    return header;
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": malformed header: " + e.what());
  }
}

void expect_end(std::istream& in, const char* what) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError(std::string(what) + ": trailing bytes after payload");
  }
}

template <typename T>
T get(const json& j, const char* key, const char* what) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string(what) + ": header field '" + key + "' missing or invalid");
  }
}

json fields_to_json(const std::vector<FieldSlice>& fields) {
  json arr = json::array();
  for (const auto& f : fields) {
    arr.push_back({{"name", f.name}, {"offset", f.offset}, {"length", f.length}});
  }
  return arr;
}

std::vector<FieldSlice> fields_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw ParseError(std::string(what) + ": fields must be an array");
  std::vector<FieldSlice> out;
  for (const auto& f : arr) {
    out.push_back({get<std::string>(f, "name", what), get<Eigen::Index>(f, "offset", what),
                   get<Eigen::Index>(f, "length", what)});
  }
  return out;
}

json ranges_to_json(const std::vector<FieldRange>& ranges) {
  json arr = json::array();
  for (const auto& r : ranges) arr.push_back({{"min", r.min}, {"max", r.max}});
  return arr;
}

std::vector<FieldRange> ranges_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw ParseError(std::string(what) + ": normalization must be an array");
  std::vector<FieldRange> out;
  for (const auto& r : arr) out.push_back({get<double>(r, "min", what), get<double>(r, "max", what)});
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

// ---------------------------------------------------------------- QDSET

void write_qdset(std::ostream& out, const SnapshotDataset& ds) {
  json header = {{"version", 1},
                 {"n_state", ds.n_state()},
                 {"n_steps", ds.n_steps()},
                 {"dt", ds.dt},
                 {"t0", ds.t0},
                 {"fields", fields_to_json(ds.fields)},
                 {"normalization", ds.normalization ? ranges_to_json(*ds.normalization)
                                                    : json(nullptr)}};
  out.write(kQdsetMagic, kMagicLen);
  out << header.dump() << '\n';
  write_matrix(out, ds.snapshots);
  if (!out) throw IoError("failed writing QDSET stream");
}

void write_qdset(const std::filesystem::path& path, const SnapshotDataset& ds) {
  std::ofstream out = open_out(path);
  write_qdset(out, ds);
}

SnapshotDataset read_qdset(std::istream& in) {
  constexpr const char* what = "QDSET";
  expect_magic(in, kQdsetMagic, what);
  const json header = read_header(in, what);
  if (get<int>(header, "version", what) != 1) throw ParseError("QDSET: unsupported version");
  const auto n_state = get<Eigen::Index>(header, "n_state", what);
  const auto n_steps = get<Eigen::Index>(header, "n_steps", what);
  if (n_state < 0 || n_steps < 0) throw ParseError("QDSET: negative dimensions");
  SnapshotDataset ds;
  ds.dt = get<double>(header, "dt", what);
  ds.t0 = get<double>(header, "t0", what);
  ds.fields = fields_from_json(header.at("fields"), what);
  if (header.contains("normalization") && !header["normalization"].is_null()) {
    ds.normalization = ranges_from_json(header["normalization"], what);
  }
  const std::streampos here = in.tellg();
  if (here != std::streampos(-1)) {
    in.seekg(0, std::ios::end);
    const std::streamoff remaining = in.tellg() - here;
    in.seekg(here);
    if (remaining != static_cast<std::streamoff>(8 * n_steps * n_state)) {
      throw ParseError("QDSET: payload has " + std::to_string(remaining) + " bytes, header implies " +
                       std::to_string(8 * n_steps * n_state));
    }
  }
  ds.snapshots = read_matrix(in, n_steps, n_state, what);
  expect_end(in, what);
  return ds;
}

SnapshotDataset read_qdset(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return read_qdset(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- QCKPT

namespace {

struct NamedArray {
  std::string name;
  std::vector<Eigen::Index> shape;  // 1 or 2 entries
  Matrix value;
};

json network_layout(const nn::Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in()}, {"out", l.out()}, {"activation", nn::to_string(l.activation)}});
  }
  json norm = nullptr;
  if (net.norm()) norm = {{"momentum", net.norm()->momentum}, {"epsilon", net.norm()->epsilon}};
  return {{"layers", layers}, {"norm", norm}};
}

void collect_network(const std::string& prefix, const nn::Network& net,
                     std::vector<NamedArray>& out) {
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    const std::string base = prefix + "." + std::to_string(i);
    out.push_back({base + ".weight", {l.out(), l.in()}, l.weights});
    out.push_back({base + ".bias", {l.out()}, l.bias});
  }
  if (net.norm()) {
    out.push_back({prefix + ".norm.running_mean", {net.norm()->dim()}, net.norm()->running_mean});
    out.push_back({prefix + ".norm.running_var", {net.norm()->dim()}, net.norm()->running_var});
  }
}

// Builds an empty network from its layout; arrays are filled afterwards.
nn::Network network_from_layout(const json& layout, const char* what) {
  std::vector<nn::DenseLayer> layers;
  for (const auto& l : layout.at("layers")) {
    nn::DenseLayer layer;
    const auto in = get<Eigen::Index>(l, "in", what);
    const auto out = get<Eigen::Index>(l, "out", what);
    if (in <= 0 || out <= 0) throw ParseError("QCKPT: layer widths must be positive");
    layer.weights = Matrix::Zero(out, in);
    layer.bias = Matrix::Zero(out, 1);
    layer.activation = nn::activation_from_string(get<std::string>(l, "activation", what));
    layers.push_back(std::move(layer));
  }
  if (layers.empty()) throw ParseError("QCKPT: network without layers");
  std::optional<nn::LatentNormLayer> norm;
  if (layout.contains("norm") && !layout["norm"].is_null()) {
    norm.emplace(layers.back().out(), get<double>(layout["norm"], "momentum", what),
                 get<double>(layout["norm"], "epsilon", what));
    norm->mode = nn::NormMode::eval;
  }
  return nn::Network(std::move(layers), std::move(norm));
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  std::vector<NamedArray> arrays;
  collect_network("encoder", ckpt.encoder, arrays);
  collect_network("decoder", ckpt.decoder, arrays);
  const Eigen::Index n = ckpt.model.latent_dim();
  arrays.push_back({"model.A", {n, n}, ckpt.model.A()});
  arrays.push_back({"model.H", {n, n * n}, ckpt.model.H()});
  arrays.push_back({"model.b", {n}, ckpt.model.b()});

  json listing = json::array();
  for (const auto& a : arrays) listing.push_back({{"name", a.name}, {"shape", a.shape}});
  json scaler = nullptr;
  if (ckpt.scaler) {
    scaler = {{"fields", fields_to_json(ckpt.scaler->fields)},
              {"ranges", ranges_to_json(ckpt.scaler->ranges)}};
  }
  const json header = {{"version", 1},
                       {"kind", ckpt.kind},
                       {"latent_dim", n},
                       {"encoder", network_layout(ckpt.encoder)},
                       {"decoder", network_layout(ckpt.decoder)},
                       {"arrays", listing},
                       {"scaler", scaler},
                       {"config", ckpt.config}};
  out.write(kCkptMagic, kMagicLen);
  out << header.dump() << '\n';
  for (const auto& a : arrays) write_matrix(out, a.value);
  if (!out) throw IoError("failed writing checkpoint stream");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out = open_out(path);
  write_checkpoint(out, ckpt);
}

Checkpoint read_checkpoint(std::istream& in) {
  constexpr const char* what = "QCKPT";
  expect_magic(in, kCkptMagic, what);
  const json header = read_header(in, what);
  if (get<int>(header, "version", what) != 1) throw ParseError("QCKPT: unsupported version");
  Checkpoint ckpt;
  ckpt.kind = get<std::string>(header, "kind", what);
  const auto n = get<Eigen::Index>(header, "latent_dim", what);
  if (n < 1) throw ParseError("QCKPT: latent_dim must be >= 1");
  try {
    ckpt.encoder = network_from_layout(header.at("encoder"), what);
    ckpt.decoder = network_from_layout(header.at("decoder"), what);
  } catch (const json::exception& e) {
    throw ParseError(std::string("QCKPT: bad network layout: ") + e.what());
  } catch (const DimensionError& e) {
    throw ParseError(std::string("QCKPT: inconsistent network layout: ") + e.what());
  }
  if (header.contains("scaler") && !header["scaler"].is_null()) {
    Scaler s;
    s.fields = fields_from_json(header["scaler"].at("fields"), what);
    s.ranges = ranges_from_json(header["scaler"].at("ranges"), what);
    ckpt.scaler = std::move(s);
  }
  if (header.contains("config")) ckpt.config = header["config"];

  // Expected arrays, in the order the writer emits them.
  std::vector<std::pair<std::string, Matrix*>> targets;
  auto add_network = [&](const std::string& prefix, nn::Network& net) {
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      const std::string base = prefix + "." + std::to_string(i);
      targets.emplace_back(base + ".weight", &net.layers()[i].weights);
      targets.emplace_back(base + ".bias", &net.layers()[i].bias);
    }
  };
  add_network("encoder", ckpt.encoder);
  add_network("decoder", ckpt.decoder);
  Vector enc_mean, enc_var, dec_mean, dec_var;
  Matrix A = Matrix::Zero(n, n), H = Matrix::Zero(n, n * n), b = Matrix::Zero(n, 1);

  const json& listing = header.at("arrays");
  if (!listing.is_array()) throw ParseError("QCKPT: arrays must be a list");
  std::size_t next_target = 0;
  for (const auto& entry : listing) {
    const auto name = get<std::string>(entry, "name", what);
    const auto shape = get<std::vector<Eigen::Index>>(entry, "shape", what);
    if (shape.empty() || shape.size() > 2) throw ParseError("QCKPT: bad shape for " + name);
    const Eigen::Index rows = shape[0];
    const Eigen::Index cols = shape.size() == 2 ? shape[1] : 1;
    Matrix value = read_matrix(in, rows, cols, what);
    auto assign = [&](Matrix& dst) {
      if (dst.rows() != rows || dst.cols() != cols) {
        throw ParseError("QCKPT: shape of " + name + " disagrees with the layout");
      }
      dst = std::move(value);
    };
    if (next_target < targets.size() && targets[next_target].first == name) {
      assign(*targets[next_target++].second);
    } else if (name == "encoder.norm.running_mean" || name == "encoder.norm.running_var" ||
               name == "decoder.norm.running_mean" || name == "decoder.norm.running_var") {
      nn::Network& net = name.rfind("encoder", 0) == 0 ? ckpt.encoder : ckpt.decoder;
      if (!net.norm() || cols != 1 || rows != net.norm()->dim()) {
        throw ParseError("QCKPT: unexpected " + name);
      }
      (name.find("mean") != std::string::npos ? net.norm()->running_mean
                                              : net.norm()->running_var) = value.col(0);
    } else if (name == "model.A") {
      assign(A);
    } else if (name == "model.H") {
      assign(H);
    } else if (name == "model.b") {
      assign(b);
    } else {
      throw ParseError("QCKPT: unexpected array " + name);
    }
  }
  if (next_target != targets.size()) throw ParseError("QCKPT: missing network arrays");
  expect_end(in, what);
  try {
    ckpt.model = QuadraticModel(std::move(A), std::move(H), b.col(0));
  } catch (const Error& e) {
    throw ParseError(std::string("QCKPT: invalid model: ") + e.what());
  }
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  try {
    return read_checkpoint(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace qde
