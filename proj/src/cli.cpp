#include "quadembed/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <optional>

#include "quadembed/baseline.hpp"
#include "quadembed/config.hpp"
#include "quadembed/errors.hpp"
#include "quadembed/eval.hpp"
#include "quadembed/io.hpp"
#include "quadembed/training.hpp"

namespace qde {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonOptions& opts) {
  std::vector<std::string> overrides = opts.overrides;
  if (opts.seed) overrides.push_back("seed=" + std::to_string(*opts.seed));
  std::optional<fs::path> file;
  if (!opts.config.empty()) file = fs::path(opts.config);
  RunConfig cfg = load_run_config(file, overrides);
  if (!opts.out.empty()) cfg.output_dir = opts.out;
  fs::create_directories(cfg.output_dir);
  return cfg;
}

fs::path dataset_path(const std::string& flag, const RunConfig& cfg) {
  if (!flag.empty()) return flag;
  if (cfg.dataset.path) return *cfg.dataset.path;
  return cfg.output_dir / "dataset.qdset";
}

// Training data must be normalized; raw files are normalized on load.
Normalized load_normalized(const fs::path& path) {
  SnapshotDataset ds = read_qdset(path);
  ds.validate();
  if (ds.normalization) {
    Scaler scaler = scaler_of(ds);
    return {std::move(ds), std::move(scaler)};
  }
  return normalize(ds);
}

// Brings a dataset into the coordinates of a checkpoint's scaler.
SnapshotDataset align_with(const SnapshotDataset& raw_or_normalized, const Checkpoint& ckpt) {
  SnapshotDataset ds = raw_or_normalized;
  ds.validate();
  if (ds.normalization || !ckpt.scaler) return ds;
  if (ckpt.scaler->fields.size() != ds.fields.size()) {
    throw DimensionError("dataset field layout differs from the checkpoint scaler");
  }
  for (std::size_t i = 0; i < ds.fields.size(); ++i) {
    const auto& a = ds.fields[i];
    const auto& b = ckpt.scaler->fields[i];
    if (a.offset != b.offset || a.length != b.length) {
      throw DimensionError("dataset field layout differs from the checkpoint scaler");
    }
  }
  ds.snapshots = ckpt.scaler->apply(ds.snapshots);
  ds.normalization = ckpt.scaler->ranges;
  return ds;
}

int cmd_gen(const CommonOptions& opts, std::ostream& out) {
  const RunConfig cfg = resolve_config(opts);
  SnapshotDataset ds = generate_dataset(cfg.dataset);
  if (cfg.dataset.normalize) ds = normalize(ds).dataset;
  const fs::path path = cfg.output_dir / "dataset.qdset";
  write_qdset(path, ds);
  out << "testbed " << cfg.dataset.testbed << '\n'
      << "n_state " << ds.n_state() << '\n'
      << "n_steps " << ds.n_steps() << '\n'
      << "dt " << ds.dt << '\n'
      << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_train(const CommonOptions& opts, const std::string& data, std::ostream& out) {
  const RunConfig cfg = resolve_config(opts);
  const Normalized data_set = load_normalized(dataset_path(data, cfg));
  const nlohmann::json echo = config_echo(cfg);

  auto to_checkpoint = [&](const TrainedModel& trained) {
    Checkpoint ckpt;
    ckpt.kind = "learned";
    ckpt.encoder = trained.encoder;
    ckpt.decoder = trained.decoder;
    ckpt.model = trained.model;
    ckpt.scaler = data_set.scaler;
    ckpt.config = echo;
    return ckpt;
  };
  TrainCallbacks callbacks;
  callbacks.on_checkpoint = [&](int epoch, const TrainedModel& state) {
    write_checkpoint(cfg.output_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".qckpt"),
                     to_checkpoint(state));
  };
  const TrainedModel trained = train(cfg.training, data_set.dataset, callbacks);
  write_checkpoint(cfg.output_dir / "model.qckpt", to_checkpoint(trained));
  write_text(cfg.output_dir / "history.csv", trained.history.to_csv());
  const EpochRecord& last = trained.history.records.back();
  out << "epochs " << trained.history.records.size() << '\n'
      << "l_rec " << last.l_rec << '\n'
      << "l_total " << last.l_total << '\n'
      << "wrote " << (cfg.output_dir / "model.qckpt").string() << '\n';
  return kExitOk;
}

int cmd_baseline(const CommonOptions& opts, const std::string& data, std::optional<int> r_flag,
                 std::optional<double> reg_flag, std::ostream& out) {
  const RunConfig cfg = resolve_config(opts);
  const int r = r_flag.value_or(cfg.baseline.r);
  const double reg = reg_flag.value_or(cfg.baseline.reg);
  if (r < 1) throw ConfigError("baseline r must be >= 1");
  if (!(reg >= 0.0)) throw ConfigError("baseline reg must be >= 0");
  const Normalized data_set = load_normalized(dataset_path(data, cfg));
  const SnapshotDataset& ds = data_set.dataset;

  const LinearRom rom = fit_linear_rom(ds, r, reg);

  Checkpoint ckpt;
  ckpt.kind = "linear";
  ckpt.encoder = rom.encoder();
  ckpt.decoder = rom.decoder();
  ckpt.model = rom.model;
  ckpt.scaler = data_set.scaler;
  ckpt.config = {{"r", r},
                 {"reg", reg},
                 {"singular_values", std::vector<double>(rom.pod.singular_values.data(),
                                                          rom.pod.singular_values.data() + r)}};
  const fs::path path = cfg.output_dir / "baseline.qckpt";
  write_checkpoint(path, ckpt);
  out << "r " << r << '\n' << "reg " << reg << '\n' << "wrote " << path.string() << '\n';
  return kExitOk;
}

void print_summary(std::ostream& out, const std::string& name, const RolloutResult& res) {
  out << name << " mean_rel_l2 " << res.summary.mean_rel_l2 << " max_rel_l2 "
      << res.summary.max_rel_l2 << " recon_mse " << res.summary.recon_mse
      << (res.diverged ? " DIVERGED" : "") << '\n';
}

int cmd_rollout(const CommonOptions& opts, const std::string& checkpoint, const std::string& data,
                std::ostream& out) {
  const RunConfig cfg = resolve_config(opts);
  const Checkpoint ckpt = read_checkpoint(fs::path(checkpoint));
  const SnapshotDataset ds = align_with(read_qdset(dataset_path(data, cfg)), ckpt);
  const RolloutResult res = evaluate_rollout(ckpt.encoder, ckpt.decoder, ckpt.model, ds);
  export_trajectory(res, ds, cfg.output_dir / "rollout.csv");
  write_text(cfg.output_dir / "metrics.csv", compare({{"model", res}}).to_csv());
  print_summary(out, "model", res);
  return res.diverged ? kExitDivergence : kExitOk;
}

int cmd_eval(const CommonOptions& opts, const std::vector<std::string>& checkpoints,
             std::vector<std::string> names, const std::string& data, std::ostream& out) {
  const RunConfig cfg = resolve_config(opts);
  if (!names.empty() && names.size() != checkpoints.size()) {
    throw ConfigError("--name must be given once per --checkpoint");
  }
  const SnapshotDataset raw = read_qdset(dataset_path(data, cfg));
  std::vector<std::pair<std::string, RolloutResult>> results;
  bool diverged = false;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const Checkpoint ckpt = read_checkpoint(fs::path(checkpoints[i]));
    const SnapshotDataset ds = align_with(raw, ckpt);
    const std::string name = names.empty() ? fs::path(checkpoints[i]).stem().string() : names[i];
    RolloutResult res = evaluate_rollout(ckpt.encoder, ckpt.decoder, ckpt.model, ds);
    print_summary(out, name, res);
    diverged = diverged || res.diverged;
    results.emplace_back(name, std::move(res));
  }
  write_text(cfg.output_dir / "metrics.csv", compare(results).to_csv());
  out << "wrote " << (cfg.output_dir / "metrics.csv").string() << '\n';
  return diverged ? kExitDivergence : kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config, "run configuration (JSON)");
  sub->add_option("--set", opts.overrides, "override a config value, key=value (repeatable)");
  sub->add_option("--out", opts.out, "output directory");
  sub->add_option("--seed", opts.seed, "random seed");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quadratic latent dynamics: data generation, training, baseline, evaluation", "qde"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::string data, checkpoint;
  std::vector<std::string> checkpoints, names;
  std::optional<int> r_flag;
  std::optional<double> reg_flag;

  auto* gen = app.add_subcommand("gen", "generate a snapshot dataset");
  add_common(gen, opts);
  auto* train_cmd = app.add_subcommand("train", "train encoder, decoder and quadratic model");
  add_common(train_cmd, opts);
  train_cmd->add_option("--data", data, "dataset (QDSET)");
  auto* base = app.add_subcommand("baseline", "fit the POD + operator-inference baseline");
  add_common(base, opts);
  base->add_option("--data", data, "dataset (QDSET)");
  base->add_option("--r", r_flag, "POD dimension");
  base->add_option("--reg", reg_flag, "ridge regularization");
  auto* roll = app.add_subcommand("rollout", "roll out one checkpoint and export trajectories");
  add_common(roll, opts);
  roll->add_option("--checkpoint", checkpoint, "checkpoint (QCKPT)")->required();
  roll->add_option("--data", data, "dataset (QDSET)");
  auto* ev = app.add_subcommand("eval", "compare checkpoints on one dataset");
  add_common(ev, opts);
  ev->add_option("--checkpoint", checkpoints, "checkpoint (repeatable)")->required();
  ev->add_option("--name", names, "row name per checkpoint");
  ev->add_option("--data", data, "dataset (QDSET)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(opts, out);
    if (train_cmd->parsed()) return cmd_train(opts, data, out);
    if (base->parsed()) return cmd_baseline(opts, data, r_flag, reg_flag, out);
    if (roll->parsed()) return cmd_rollout(opts, checkpoint, data, out);
    if (ev->parsed()) return cmd_eval(opts, checkpoints, names, data, out);
  } catch (const TrainingError& e) {
    err << "training aborted: " << e.what() << '\n';
    return kExitTrainingAbort;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kExitDimension;
  } catch (const RankError& e) {
    err << "rank error: " << e.what() << '\n';
    return kExitDimension;
  } catch (const ConditioningError& e) {
    err << "conditioning error: " << e.what() << '\n';
    return kExitDimension;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace qde
