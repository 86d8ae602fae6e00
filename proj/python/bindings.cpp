#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "quadembed/baseline.hpp"
#include "quadembed/cli.hpp"
#include "quadembed/datagen.hpp"
#include "quadembed/errors.hpp"
#include "quadembed/eval.hpp"
#include "quadembed/io.hpp"
#include "quadembed/quaddyn.hpp"
#include "quadembed/training.hpp"

namespace py = pybind11;
using namespace qde;

namespace {

// Keyword arguments that are not None override the defaults of `P`.
template <typename P, typename T>
void set_if(const py::kwargs& kw, const char* key, T P::*field, P& p) {
  if (kw.contains(key) && !kw[key].is_none()) p.*field = kw[key].cast<T>();
}

void reject_unknown(const py::kwargs& kw, std::initializer_list<const char*> known) {
  for (const auto& item : kw) {
    const auto key = item.first.cast<std::string>();
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown parameter '" + key + "'");
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quadratic latent dynamics: simulators, POD baseline, training and evaluation";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DatasetError>(m, "DatasetError", base.ptr());
  py::register_exception<RankError>(m, "RankError", base.ptr());
  py::register_exception<ConditioningError>(m, "ConditioningError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<QuadraticModel>(m, "QuadraticModel")
      .def(py::init<Matrix, Matrix, Vector>(), py::arg("A"), py::arg("H"), py::arg("b"))
      .def_static("zeros", &QuadraticModel::zeros, py::arg("latent_dim"))
      .def_property_readonly("latent_dim", &QuadraticModel::latent_dim)
      .def_property_readonly("A", &QuadraticModel::A)
      .def_property_readonly("H", &QuadraticModel::H)
      .def_property_readonly("b", &QuadraticModel::b)
      .def("__repr__", [](const QuadraticModel& q) {
        return "QuadraticModel(latent_dim=" + std::to_string(q.latent_dim()) + ")";
      });

  m.def("kron_sq", &kron_sq, py::arg("z"));
  m.def("eval_rhs", &eval_rhs, py::arg("model"), py::arg("z"));
  m.def("rk4_step", py::overload_cast<const QuadraticModel&, const Vector&, double>(&rk4_step),
        py::arg("model"), py::arg("z"), py::arg("h"));
  m.def("rk4_step_back", &rk4_step_back, py::arg("model"), py::arg("z"), py::arg("h"));
  m.def(
      "rollout",
      [](const QuadraticModel& model, const Vector& z0, double h, int steps) {
        return rollout(model, z0, h, steps).as_matrix();
      },
      py::arg("model"), py::arg("z0"), py::arg("h"), py::arg("steps"),
      "States as rows, steps + 1 of them.");

  py::class_<FieldSlice>(m, "FieldSlice")
      .def(py::init([](std::string name, Eigen::Index offset, Eigen::Index length) {
             return FieldSlice{std::move(name), offset, length};
           }),
           py::arg("name"), py::arg("offset"), py::arg("length"))
      .def_readwrite("name", &FieldSlice::name)
      .def_readwrite("offset", &FieldSlice::offset)
      .def_readwrite("length", &FieldSlice::length);

  py::class_<SnapshotDataset>(m, "SnapshotDataset")
      .def(py::init([](Matrix snapshots, double dt, std::vector<FieldSlice> fields, double t0) {
             SnapshotDataset ds;
             ds.snapshots = std::move(snapshots);
             ds.dt = dt;
             ds.t0 = t0;
             ds.fields = fields.empty()
                             ? std::vector<FieldSlice>{{"x", 0, ds.snapshots.cols()}}
                             : std::move(fields);
             ds.validate();
             return ds;
           }),
           py::arg("snapshots"), py::arg("dt"), py::arg("fields") = std::vector<FieldSlice>{},
           py::arg("t0") = 0.0)
      .def_readwrite("snapshots", &SnapshotDataset::snapshots)
      .def_readwrite("dt", &SnapshotDataset::dt)
      .def_readwrite("t0", &SnapshotDataset::t0)
      .def_readwrite("fields", &SnapshotDataset::fields)
      .def_property_readonly("normalized",
                             [](const SnapshotDataset& d) { return d.normalization.has_value(); })
      .def_property_readonly("n_steps", &SnapshotDataset::n_steps)
      .def_property_readonly("n_state", &SnapshotDataset::n_state)
      .def("validate", &SnapshotDataset::validate);

  py::class_<Scaler>(m, "Scaler")
      .def("apply", &Scaler::apply, py::arg("raw"))
      .def("invert", &Scaler::invert, py::arg("normalized"));

  m.def(
      "normalize",
      [](const SnapshotDataset& ds) {
        Normalized n = normalize(ds);
        return py::make_tuple(std::move(n.dataset), std::move(n.scaler));
      },
      py::arg("dataset"), "Returns (normalized dataset, scaler).");

  m.def(
      "pendulum_dataset",
      [](bool lifted, const py::kwargs& kw) {
        reject_unknown(kw, {"x0", "h", "T"});
        PendulumParams p;
        set_if(kw, "x0", &PendulumParams::x0, p);
        set_if(kw, "h", &PendulumParams::h, p);
        set_if(kw, "T", &PendulumParams::T, p);
        return lifted ? make_lifted_pendulum_dataset(p) : make_pendulum_dataset(p);
      },
      py::arg("lifted") = false);
  m.def("lift_pendulum", &lift_pendulum, py::arg("x"));
  m.def("pendulum_lifted_model", &pendulum_lifted_model);
  m.def("reactor_dataset", [](const py::kwargs& kw) {
    reject_unknown(kw, {"D", "Pe", "gamma", "n_x", "dt_sim", "T", "dt"});
    ReactorParams p;
    set_if(kw, "D", &ReactorParams::D, p);
    set_if(kw, "Pe", &ReactorParams::Pe, p);
    set_if(kw, "gamma", &ReactorParams::gamma, p);
    set_if(kw, "n_x", &ReactorParams::n_x, p);
    set_if(kw, "dt_sim", &ReactorParams::dt_sim, p);
    set_if(kw, "T", &ReactorParams::T, p);
    set_if(kw, "dt", &ReactorParams::dt, p);
    return simulate_reactor(p);
  });
  m.def("burgers_dataset", [](const py::kwargs& kw) {
    reject_unknown(kw, {"lo", "hi", "n_cells", "n_cells_y", "T", "n_snapshots", "cfl"});
    BurgersParams p;
    set_if(kw, "lo", &BurgersParams::lo, p);
    set_if(kw, "hi", &BurgersParams::hi, p);
    set_if(kw, "n_cells", &BurgersParams::n_cells, p);
    set_if(kw, "n_cells_y", &BurgersParams::n_cells_y, p);
    set_if(kw, "T", &BurgersParams::T, p);
    set_if(kw, "n_snapshots", &BurgersParams::n_snapshots, p);
    set_if(kw, "cfl", &BurgersParams::cfl, p);
    return simulate_burgers2d(p);
  });

  m.def("read_qdset", py::overload_cast<const std::filesystem::path&>(&read_qdset),
        py::arg("path"));
  m.def("write_qdset",
        py::overload_cast<const std::filesystem::path&, const SnapshotDataset&>(&write_qdset),
        py::arg("path"), py::arg("dataset"));

  py::class_<PodBasis>(m, "PodBasis")
      .def_readonly("basis", &PodBasis::basis)
      .def_readonly("singular_values", &PodBasis::singular_values)
      .def_property_readonly("r", &PodBasis::r);
  m.def("pod_basis", &pod_basis, py::arg("snapshots"), py::arg("r"));
  m.def("opinf_fit", &opinf_fit, py::arg("latent"), py::arg("derivatives"), py::arg("reg"));
  m.def("estimate_derivatives", &estimate_derivatives, py::arg("latent"), py::arg("dt"));

  py::class_<nn::Network>(m, "Network")
      .def_property_readonly("input_dim", &nn::Network::input_dim)
      .def_property_readonly("output_dim", &nn::Network::output_dim)
      .def_property_readonly("parameter_count", &nn::Network::parameter_count)
      .def(
          "predict", [](const nn::Network& net, const Matrix& x) { return nn::predict(net, x); },
          py::arg("batch"));

  py::class_<LinearRom>(m, "LinearRom")
      .def_readonly("pod", &LinearRom::pod)
      .def_readonly("model", &LinearRom::model)
      .def_property_readonly("encoder", &LinearRom::encoder)
      .def_property_readonly("decoder", &LinearRom::decoder);
  m.def("fit_linear_rom", &fit_linear_rom, py::arg("dataset"), py::arg("r"),
        py::arg("reg") = 1e-8);

  py::class_<TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_readwrite("latent_dim", &TrainingConfig::latent_dim)
      .def_readwrite("encoder_hidden", &TrainingConfig::encoder_hidden)
      .def_readwrite("decoder_hidden", &TrainingConfig::decoder_hidden)
      .def_readwrite("epochs", &TrainingConfig::epochs)
      .def_readwrite("batch_size", &TrainingConfig::batch_size)
      .def_readwrite("lr0", &TrainingConfig::lr0)
      .def_readwrite("lr_decay_factor", &TrainingConfig::lr_decay_factor)
      .def_readwrite("lr_decay_every", &TrainingConfig::lr_decay_every)
      .def_readwrite("seed", &TrainingConfig::seed)
      .def_property(
          "fixed_lambda",
          [](const TrainingConfig& c) -> std::optional<double> {
            if (c.lambda_mode == LambdaMode::fixed) return c.lambda_value;
            return std::nullopt;
          },
          [](TrainingConfig& c, std::optional<double> v) {
            c.lambda_mode = v ? LambdaMode::fixed : LambdaMode::one_over_dt;
            c.lambda_value = v.value_or(0.0);
          },
          "None means lambda = 1/dt.")
      .def("validate", &TrainingConfig::validate);

  py::class_<EpochRecord>(m, "EpochRecord")
      .def_readonly("epoch", &EpochRecord::epoch)
      .def_readonly("l_rec", &EpochRecord::l_rec)
      .def_readonly("l_rk4", &EpochRecord::l_rk4)
      .def_readonly("l_rk4b", &EpochRecord::l_rk4b)
      .def_readonly("l_total", &EpochRecord::l_total)
      .def_readonly("lr", &EpochRecord::lr);

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_readonly("encoder", &TrainedModel::encoder)
      .def_readonly("decoder", &TrainedModel::decoder)
      .def_readonly("model", &TrainedModel::model)
      .def_property_readonly("history",
                             [](const TrainedModel& t) { return t.history.records; })
      .def_property_readonly("history_csv",
                             [](const TrainedModel& t) { return t.history.to_csv(); });

  m.def(
      "train",
      [](const TrainingConfig& cfg, const SnapshotDataset& ds,
         std::function<void(const EpochRecord&)> on_epoch) {
        TrainCallbacks callbacks;
        if (on_epoch) callbacks.on_epoch = std::move(on_epoch);
        py::gil_scoped_release release;
        if (callbacks.on_epoch) {
          auto inner = callbacks.on_epoch;
          callbacks.on_epoch = [inner](const EpochRecord& r) {
            py::gil_scoped_acquire acquire;
            inner(r);
          };
        }
        return train(cfg, ds, callbacks);
      },
      py::arg("config"), py::arg("dataset"), py::arg("on_epoch") = nullptr,
      "Dataset must be normalized.");

  py::class_<RolloutResult>(m, "RolloutResult")
      .def_readonly("decoded", &RolloutResult::decoded)
      .def_readonly("per_time_error", &RolloutResult::per_time_error)
      .def_readonly("diverged", &RolloutResult::diverged)
      .def_readonly("failed_step", &RolloutResult::failed_step)
      .def_property_readonly("latent", [](const RolloutResult& r) { return r.latent.as_matrix(); })
      .def_property_readonly("mean_rel_l2",
                             [](const RolloutResult& r) { return r.summary.mean_rel_l2; })
      .def_property_readonly("max_rel_l2",
                             [](const RolloutResult& r) { return r.summary.max_rel_l2; })
      .def_property_readonly("recon_mse",
                             [](const RolloutResult& r) { return r.summary.recon_mse; });
  m.def("evaluate_rollout", &evaluate_rollout, py::arg("encoder"), py::arg("decoder"),
        py::arg("model"), py::arg("dataset"));
  m.def("relative_l2", &relative_l2, py::arg("truth"), py::arg("estimate"));

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("kind", &Checkpoint::kind)
      .def_readonly("encoder", &Checkpoint::encoder)
      .def_readonly("decoder", &Checkpoint::decoder)
      .def_readonly("model", &Checkpoint::model)
      .def_property_readonly("config", [](const Checkpoint& c) { return c.config.dump(); },
                             "Configuration echo as a JSON string.");
  m.def("read_checkpoint", py::overload_cast<const std::filesystem::path&>(&read_checkpoint),
        py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
