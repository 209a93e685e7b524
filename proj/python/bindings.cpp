#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ivgae/bayesopt.hpp"
#include "ivgae/cli.hpp"
#include "ivgae/config_io.hpp"
#include "ivgae/errors.hpp"
#include "ivgae/graphdata.hpp"
#include "ivgae/metrics.hpp"
#include "ivgae/tama.hpp"
#include "ivgae/training.hpp"

namespace py = pybind11;
using namespace ivgae;

namespace {

const GraphSnapshot& snapshot_at(const TemporalDataset& ds, std::size_t i) {
  if (i >= ds.size()) throw py::index_error("snapshot index out of range");
  return ds.snapshots[i];
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);

  py::class_<SynthOptions>(m, "SynthOptions")
      .def(py::init<>())
      .def_readwrite("nodes", &SynthOptions::nodes)
      .def_readwrite("years", &SynthOptions::years)
      .def_readwrite("p_backbone", &SynthOptions::p_backbone)
      .def_readwrite("p_churn", &SynthOptions::p_churn)
      .def_readwrite("feature_noise", &SynthOptions::feature_noise)
      .def_readwrite("first_year", &SynthOptions::first_year);

  py::class_<TemporalDataset>(m, "Dataset")
      .def_property_readonly("countries", [](const TemporalDataset& d) { return d.countries.codes(); })
      .def_property_readonly("years",
                             [](const TemporalDataset& d) {
                               std::vector<int> ys;
                               for (const auto& s : d.snapshots) ys.push_back(s.year);
                               return ys;
                             })
      .def_property_readonly("nodes", &TemporalDataset::nodes)
      .def("__len__", &TemporalDataset::size)
      .def("adjacency", [](const TemporalDataset& d, std::size_t i) { return snapshot_at(d, i).adjacency; })
      .def("trade", [](const TemporalDataset& d, std::size_t i) { return snapshot_at(d, i).trade; })
      .def("features", [](const TemporalDataset& d, std::size_t i) { return snapshot_at(d, i).features; })
      .def("persistence", &edge_persistence);

  m.def("synth_generate", &synth_generate, py::arg("seed"), py::arg("options") = SynthOptions{});
  m.def("load_dataset", &load_dataset, py::arg("edges"), py::arg("features"));
  m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("edges"), py::arg("features"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("kl_weight", &TrainConfig::kl_weight)
      .def_readwrite("window", &TrainConfig::window)
      .def_readwrite("seeds", &TrainConfig::seeds)
      .def_readwrite("eval_seed", &TrainConfig::eval_seed)
      .def_readwrite("pos_weight", &TrainConfig::pos_weight)
      .def_readwrite("persist_memory", &TrainConfig::persist_memory)
      .def_property(
          "model", [](const TrainConfig& c) { return to_string(c.model); },
          [](TrainConfig& c, const std::string& s) { c.model = parse_model_kind(s); })
      .def_property(
          "d_hidden", [](const TrainConfig& c) { return c.encoder.d_hidden; },
          [](TrainConfig& c, std::size_t v) { c.encoder.d_hidden = v; })
      .def_property(
          "z_dim", [](const TrainConfig& c) { return c.encoder.d_z; },
          [](TrainConfig& c, std::size_t v) { c.encoder.d_z = v; })
      .def_property(
          "heads", [](const TrainConfig& c) { return c.encoder.heads; },
          [](TrainConfig& c, std::size_t v) { c.encoder.heads = v; })
      .def_property(
          "p_drop", [](const TrainConfig& c) { return c.encoder.p_drop; },
          [](TrainConfig& c, double v) { c.encoder.p_drop = v; })
      .def_property(
          "gamma_init", [](const TrainConfig& c) { return c.tama.gamma_init; },
          [](TrainConfig& c, double v) { c.tama.gamma_init = v; })
      .def_property(
          "beta_init", [](const TrainConfig& c) { return c.tama.beta_init; },
          [](TrainConfig& c, double v) { c.tama.beta_init = v; })
      .def("validate", &TrainConfig::validate);

  m.def(
      "read_config",
      [](const std::filesystem::path& path, TrainConfig config) {
        read_config_file(path, config);
        return config;
      },
      py::arg("path"), py::arg("base") = TrainConfig{});

  py::class_<RunResult>(m, "RunResult")
      .def_readonly("seed", &RunResult::seed)
      .def_readonly("auc", &RunResult::auc)
      .def_readonly("ap", &RunResult::ap)
      .def_readonly("final_loss", &RunResult::final_loss)
      .def_readonly("loss_curve", &RunResult::loss_curve)
      .def_readonly("auc_curve", &RunResult::auc_curve)
      .def_readonly("ap_curve", &RunResult::ap_curve);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("model", &EvalReport::model)
      .def_readonly("runs", &EvalReport::runs)
      .def_readonly("auc_mean", &EvalReport::auc_mean)
      .def_readonly("auc_std", &EvalReport::auc_std)
      .def_readonly("ap_mean", &EvalReport::ap_mean)
      .def_readonly("ap_std", &EvalReport::ap_std)
      .def("__str__", &EvalReport::summary);

  m.def("train_run", &train_run, py::arg("dataset"), py::arg("config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_seeds", &run_seeds, py::arg("dataset"), py::arg("config"), py::arg("jobs") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "aggregate_runs",
      [](const std::string& model, const std::vector<RunResult>& runs) { return aggregate_runs(model, runs); },
      py::arg("model"), py::arg("runs"));

  m.def(
      "auc_score",
      [](const std::vector<double>& pos, const std::vector<double>& neg) { return auc_score(pos, neg); },
      py::arg("positives"), py::arg("negatives"));
  m.def(
      "average_precision",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return average_precision(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "memory_sequence",
      [](const std::vector<Mat>& scores, double gamma) {
        if (scores.empty()) throw ConfigError("memory_sequence: empty score sequence");
        MemoryState s = MemoryState::zeros(scores.front().rows());
        for (const auto& a : scores) s = memory_update(s, a, gamma);
        return s.memory;
      },
      py::arg("scores"), py::arg("gamma"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
