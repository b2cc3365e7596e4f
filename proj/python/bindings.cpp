#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "mlvae/config.hpp"
#include "mlvae/errors.hpp"
#include "mlvae/evaluation.hpp"
#include "mlvae/gaussian.hpp"
#include "mlvae/objectives.hpp"
#include "mlvae/training.hpp"

namespace py = pybind11;
using namespace mlvae;

namespace {

py::dict row_to_dict(const MetricsRow& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["recon"] = r.recon;
  d["style_kl"] = r.style_kl;
  d["content_kl"] = r.content_kl;
  d["elbo"] = r.elbo;
  d["L_psi"] = r.mi;
  d["lambda"] = r.lambda;
  d["wall_time_s"] = r.wall_time_s;
  return d;
}

py::object report_to_python(const EvalReport& report) {
  return py::module_::import("json").attr("loads")(report.to_json().dump());
}

EvalOptions eval_options(const RunConfig& config, const std::string& classifier, const std::filesystem::path& out_dir) {
  EvalOptions o;
  o.classifier.kind = parse_classifier(classifier.empty() ? config.eval.classifier : classifier);
  o.classifier.svm_c = config.eval.svm_c;
  o.classifier.svm_gamma = config.eval.svm_gamma;
  o.grid_size = config.eval.grid_size;
  o.traversal_steps = config.eval.traversal_steps;
  o.out_dir = out_dir;
  o.run_id = config.name;
  o.seed = config.seed;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-level VAE with an adversarial mutual-information penalty";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<InvalidDistribution>(m, "InvalidDistribution", base.ptr());
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", base.ptr());

  py::class_<RunConfig>(m, "Config")
      .def(py::init<>())
      .def_static("from_toml", [](const std::string& text) { return parse_run_config(text); }, py::arg("text"))
      .def_static("load", &load_run_config, py::arg("path"))
      .def("to_toml", [](const RunConfig& c) { return to_toml(c); })
      .def(
          "override",
          [](RunConfig& c, const std::vector<std::string>& items) { apply_overrides(c, items); },
          py::arg("items"), "Applies key=value overrides in place")
      .def("validate", &RunConfig::validate)
      .def_readwrite("name", &RunConfig::name)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("deterministic", &RunConfig::deterministic)
      .def_readwrite("group_size", &RunConfig::group_size)
      .def_readwrite("beta", &RunConfig::beta)
      .def_readwrite("adversarial", &RunConfig::adversarial)
      .def_readwrite("target_mi", &RunConfig::target_mi)
      .def_readwrite("lambda_step", &RunConfig::lambda_step)
      .def_readwrite("iterations", &RunConfig::iterations)
      .def_readwrite("batch_groups", &RunConfig::batch_groups)
      .def_readwrite("critic_steps", &RunConfig::critic_steps)
      .def_property_readonly("content_dim", [](const RunConfig& c) { return c.network.content_dim; })
      .def_property_readonly("style_dim", [](const RunConfig& c) { return c.network.style_dim; })
      .def("__repr__", [](const RunConfig& c) { return "<mlvae.Config " + c.name + ">"; });

  m.def("config_keys", &config_keys);

  m.def(
      "update_lambda",
      [](double value, double mi, double target_mi, double step_size) {
        return update_lambda({value, target_mi, step_size}, mi).value;
      },
      py::arg("value"), py::arg("mi"), py::arg("target_mi") = 0.2, py::arg("step_size") = 0.1);

  m.def(
      "kl_to_standard_normal",
      [](const VectorXd& mean, const VectorXd& log_var) { return kl_to_standard_normal(DiagonalGaussian(mean, log_var)); },
      py::arg("mean"), py::arg("log_var"));

  m.def(
      "accumulate",
      [](const Eigen::MatrixXd& means, const Eigen::MatrixXd& log_vars, const std::string& kind) {
        if (means.rows() != log_vars.rows() || means.cols() != log_vars.cols()) {
          throw ShapeError("means and log_vars must have the same shape");
        }
        std::vector<DiagonalGaussian> posteriors;
        for (Eigen::Index i = 0; i < means.rows(); ++i) {
          posteriors.emplace_back(means.row(i).transpose(), log_vars.row(i).transpose());
        }
        const DiagonalGaussian g = accumulate(parse_accumulation(kind), posteriors);
        return py::make_tuple(g.mean(), g.log_var());
      },
      py::arg("means"), py::arg("log_vars"), py::arg("kind") = "product",
      "Pools one Gaussian per row into a single content posterior");

  m.def(
      "dv_bound",
      [](const std::vector<double>& joint, const std::vector<double>& marginal) { return dv_bound(joint, marginal); },
      py::arg("joint"), py::arg("marginal"));

  py::class_<ModelBundle>(m, "Model")
      .def(py::init<const RunConfig&>(), py::arg("config"))
      .def_static("load", &ModelBundle::load, py::arg("path"))
      .def("save", &ModelBundle::save, py::arg("path"))
      .def_property_readonly("config", &ModelBundle::config)
      .def_property_readonly("iteration", [](const ModelBundle& b) { return b.iteration; })
      .def_property_readonly("lambda_value", [](const ModelBundle& b) { return b.lambda.value; })
      .def(
          "encode",
          [](ModelBundle& b, const Matrix& x) {
            const EncoderBatch e = b.encoder().forward(x);
            py::dict d;
            d["content_mean"] = e.content_mean;
            d["content_log_var"] = e.content_log_var;
            d["style_mean"] = e.style_mean;
            d["style_log_var"] = e.style_log_var;
            return d;
          },
          py::arg("pixels"), "Posterior parameters, one row per image")
      .def(
          "decode",
          [](ModelBundle& b, const Matrix& content, const Matrix& style) {
            return Matrix(sigmoid(b.decoder().decode(content, style)));
          },
          py::arg("content"), py::arg("style"), "Pixel probabilities, one row per latent pair")
      .def(
          "train",
          [](ModelBundle& b, const std::filesystem::path& out_dir, bool quiet) {
            const DatasetSplits splits = prepare_splits(b.config());
            TrainResult r;
            {
              py::gil_scoped_release release;
              r = train(b, splits, {out_dir, quiet, {}});
            }
            py::list rows;
            for (const auto& row : r.rows) rows.append(row_to_dict(row));
            return rows;
          },
          py::arg("out_dir") = std::filesystem::path{}, py::arg("quiet") = true,
          "Trains on the dataset named by the config; returns the logged metric rows")
      .def(
          "evaluate",
          [](ModelBundle& b, const std::filesystem::path& out_dir, const std::string& classifier) {
            const DatasetSplits splits = prepare_splits(b.config());
            check_split_disjointness(splits);
            EvalReport report;
            {
              py::gil_scoped_release release;
              report = evaluate(b.encoder(), b.decoder(), splits, eval_options(b.config(), classifier, out_dir));
            }
            return report_to_python(report);
          },
          py::arg("out_dir") = std::filesystem::path{}, py::arg("classifier") = "",
          "Downstream accuracies and reconstruction error as a dict");
}
