#include "quadembed/config.hpp"

#include <fstream>
#include <set>

#include "quadembed/errors.hpp"

namespace qde {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any key it was not asked about.
class Section {
 public:
  Section(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      dst = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key '" + where_ + "." + key + "'");
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

PendulumParams pendulum_params(const json& p) {
  PendulumParams out;
  Section s(p, "dataset.params");
  std::vector<double> x0 = {out.x0[0], out.x0[1]};
  s.read("x0", x0);
  s.read("h", out.h);
  s.read("T", out.T);
  s.finish();
  if (x0.size() != 2) throw ConfigError("dataset.params.x0 needs two entries");
  out.x0 = Eigen::Map<const Vector>(x0.data(), 2);
  return out;
}

ReactorParams reactor_params(const json& p) {
  ReactorParams out;
  Section s(p, "dataset.params");
  s.read("D", out.D);
  s.read("Pe", out.Pe);
  s.read("gamma", out.gamma);
  s.read("n_x", out.n_x);
  s.read("dt_sim", out.dt_sim);
  s.read("T", out.T);
  s.read("dt", out.dt);
  s.finish();
  out.validate();
  return out;
}

BurgersParams burgers_params(const json& p) {
  BurgersParams out;
  Section s(p, "dataset.params");
  s.read("n_cells", out.n_cells);
  s.read("n_cells_y", out.n_cells_y);
  s.read("T", out.T);
  s.read("n_snapshots", out.n_snapshots);
  s.read("cfl", out.cfl);
  s.finish();
  out.validate();
  return out;
}

const std::set<std::string> kTestbeds = {"pendulum", "lifted_pendulum", "reactor", "burgers2d"};

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' crosses a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.document = doc;
  Section top(doc, "config");

  if (const json* ds = top.child("dataset")) {
    Section s(*ds, "dataset");
    s.read("testbed", cfg.dataset.testbed);
    s.read("normalize", cfg.dataset.normalize);
    if (const json* p = s.child("params")) cfg.dataset.params = *p;
    std::string path;
    s.read("path", path);
    if (!path.empty()) cfg.dataset.path = base_dir / path;
    s.finish();
  }
  if (!kTestbeds.count(cfg.dataset.testbed)) {
    throw ConfigError("unknown testbed '" + cfg.dataset.testbed +
                      "' (expected pendulum, lifted_pendulum, reactor or burgers2d)");
  }

  TrainingConfig& t = cfg.training;
  if (const json* m = top.child("model")) {
    Section s(*m, "model");
    s.read("latent_dim", t.latent_dim);
    s.read("encoder_hidden", t.encoder_hidden);
    s.read("decoder_hidden", t.decoder_hidden);
    s.finish();
  }
  if (const json* tr = top.child("training")) {
    Section s(*tr, "training");
    if (const json* lam = s.child("lambda")) {
      if (lam->is_string() && lam->get<std::string>() == "one_over_dt") {
        t.lambda_mode = LambdaMode::one_over_dt;
      } else if (lam->is_number()) {
        t.lambda_mode = LambdaMode::fixed;
        t.lambda_value = lam->get<double>();
      } else {
        throw ConfigError("training.lambda must be \"one_over_dt\" or a number");
      }
    }
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("lr0", t.lr0);
    s.read("lr_decay_factor", t.lr_decay_factor);
    s.read("lr_decay_every", t.lr_decay_every);
    s.read("checkpoint_every", t.checkpoint_every);
    s.read("norm_momentum", t.norm_momentum);
    s.read("norm_epsilon", t.norm_epsilon);
    if (const json* a = s.child("adam")) {
      Section as(*a, "training.adam");
      as.read("beta1", t.adam.beta1);
      as.read("beta2", t.adam.beta2);
      as.read("epsilon", t.adam.epsilon);
      as.finish();
    }
    s.finish();
  }
  if (const json* b = top.child("baseline")) {
    Section s(*b, "baseline");
    s.read("r", cfg.baseline.r);
    s.read("reg", cfg.baseline.reg);
    s.finish();
  }
  std::string out_dir;
  top.read("output_dir", out_dir);
  if (!out_dir.empty()) cfg.output_dir = base_dir / out_dir;
  top.read("seed", cfg.seed);
  top.finish();

  t.seed = cfg.seed;
  t.validate();
  if (cfg.baseline.r < 1) throw ConfigError("baseline.r must be >= 1");
  if (!(cfg.baseline.reg >= 0.0)) throw ConfigError("baseline.reg must be >= 0");
  // Validates testbed parameters eagerly so typos surface before any work.
  if (cfg.dataset.testbed == "reactor") {
    reactor_params(cfg.dataset.params);
  } else if (cfg.dataset.testbed == "burgers2d") {
    burgers_params(cfg.dataset.params);
  } else {
    pendulum_params(cfg.dataset.params);
  }
  return cfg;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides) {
  json doc = json::object();
  std::filesystem::path base = ".";
  if (file) {
    std::ifstream in(*file);
    if (!in) throw IoError("cannot open config " + file->string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ParseError("config " + file->string() + ": " + e.what());
    }
    base = file->parent_path().empty() ? std::filesystem::path(".") : file->parent_path();
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_run_config(doc, base);
}

SnapshotDataset generate_dataset(const DatasetSection& section) {
  const std::string& tb = section.testbed;
  if (tb == "pendulum") return make_pendulum_dataset(pendulum_params(section.params));
  if (tb == "lifted_pendulum") return make_lifted_pendulum_dataset(pendulum_params(section.params));
  if (tb == "reactor") return simulate_reactor(reactor_params(section.params));
  if (tb == "burgers2d") return simulate_burgers2d(burgers_params(section.params));
  throw ConfigError("unknown testbed '" + tb + "'");
}

nlohmann::json config_echo(const RunConfig& cfg) {
  json echo = cfg.document;
  echo.erase("output_dir");
  if (echo.contains("dataset") && echo["dataset"].is_object()) echo["dataset"].erase("path");
  echo["seed"] = cfg.seed;
  return echo;
}

}  // namespace qde
