#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "slad/commands.hpp"
#include "slad/config.hpp"
#include "slad/data.hpp"
#include "slad/metrics.hpp"
#include "slad/subpath.hpp"

namespace py = pybind11;
using namespace slad;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  const py::buffer_info info = a.request();
  std::size_t rows = 1, cols = 0;
  if (info.ndim == 1) {
    cols = static_cast<std::size_t>(info.shape[0]);
  } else if (info.ndim == 2) {
    rows = static_cast<std::size_t>(info.shape[0]);
    cols = static_cast<std::size_t>(info.shape[1]);
  } else {
    throw py::value_error("expected a 1-D or 2-D array");
  }
  const auto* p = static_cast<const double*>(info.ptr);
  return Tensor::matrix(rows, cols, std::vector<double>(p, p + rows * cols));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

RunConfig config_from(const py::object& config) {
  if (py::isinstance<py::str>(config)) return load_config(config.cast<std::string>());
  const std::string text = py::module_::import("json").attr("dumps")(config).cast<std::string>();
  return parse_config(nlohmann::json::parse(text));
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_slad, m) {
  m.doc() = "Sub-path interpolation, schedules, metrics and the training commands.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_static("linear", &NoiseSchedule::linear, py::arg("T") = 1000, py::arg("beta_start") = 1e-4,
                  py::arg("beta_end") = 0.02)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("alpha", &NoiseSchedule::alpha, py::arg("t"))
      .def("sigma", &NoiseSchedule::sigma, py::arg("t"))
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("drift", &NoiseSchedule::drift, py::arg("t"), py::arg("k"))
      .def_property_readonly("alphas", &NoiseSchedule::alphas)
      .def_property_readonly("sigmas", &NoiseSchedule::sigmas);

  m.def(
      "sl_interpolate",
      [](const Array& x_t, const Array& x_tmk, double gamma, int t, int k, const NoiseSchedule& s) {
        return to_array(sl_interpolate(to_tensor(x_t), to_tensor(x_tmk), gamma, t, k, s).x);
      },
      py::arg("x_t"), py::arg("x_tmk"), py::arg("gamma"), py::arg("t"), py::arg("k"), py::arg("schedule"));
  m.def(
      "dl_interpolate",
      [](const Array& x_t, const Array& x_tmk, double gamma, int t, int k, const NoiseSchedule& s) {
        return to_array(dl_interpolate(to_tensor(x_t), to_tensor(x_tmk), gamma, t, k, s).x);
      },
      py::arg("x_t"), py::arg("x_tmk"), py::arg("gamma"), py::arg("t"), py::arg("k"), py::arg("schedule"));
  m.def("sigma_gamma_empirical", &sigma_gamma_empirical, py::arg("gamma"), py::arg("t"), py::arg("k"),
        py::arg("schedule"));
  m.def("sigma_gamma_exact", &sigma_gamma_exact, py::arg("gamma"), py::arg("t"), py::arg("k"), py::arg("schedule"));
  m.def(
      "sigma_error_surface",
      [](int t, int k, const NoiseSchedule& s, const std::vector<double>& gammas) {
        return sigma_error_surface(t, k, s, gammas);
      },
      py::arg("t"), py::arg("k"), py::arg("schedule"), py::arg("gammas"));
  m.def(
      "dl_schedule",
      [](double gamma, int t, int k, const NoiseSchedule& s) {
        const DlSchedule d = dl_schedule(gamma, t, k, s);
        return py::make_tuple(d.alpha, d.sigma);
      },
      py::arg("gamma"), py::arg("t"), py::arg("k"), py::arg("schedule"), "(alpha, sigma) of the DL marginal.");

  m.def(
      "energy_distance",
      [](const Array& x, const Array& y, bool v_statistic) {
        return energy_distance(to_tensor(x), to_tensor(y), v_statistic);
      },
      py::arg("x"), py::arg("y"), py::arg("v_statistic") = false);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const std::string& kind, int n_modes, double radius, double scale, bool normalize,
                       std::uint64_t seed) {
             DatasetSpec spec;
             spec.kind = dataset_kind_from_string(kind);
             spec.n_modes = n_modes;
             spec.radius = radius;
             spec.scale = scale;
             spec.normalize = normalize;
             spec.seed = seed;
             return Dataset(spec);
           }),
           py::arg("kind") = "gaussian_mixture", py::arg("n_modes") = 8, py::arg("radius") = 4.0,
           py::arg("scale") = 0.5, py::arg("normalize") = true, py::arg("seed") = 0)
      .def_property_readonly("num_labels", &Dataset::num_labels)
      .def_property_readonly("normalization", &Dataset::normalization)
      .def("mode_centers", &Dataset::mode_centers)
      .def(
          "sample",
          [](const Dataset& d, std::uint64_t first_index, std::size_t count) {
            const LabeledBatch b = d.sample(first_index, count);
            return py::make_tuple(to_array(b.points), b.labels);
          },
          py::arg("first_index"), py::arg("count"), "(points, labels) for indices first_index..+count.");

  m.def(
      "load_config", [](const py::object& config) { return json_to_py(to_json(config_from(config))); },
      py::arg("config"), "Validated configuration with defaults filled in, from a path or a dict.");
  m.def(
      "train_teacher",
      [](const py::object& config, const std::string& out_dir, const std::string& resume) {
        const RunConfig c = config_from(config);
        py::gil_scoped_release release;
        run_train_teacher(c, out_dir, resume);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("resume") = "");
  m.def(
      "distill",
      [](const py::object& config, const std::string& out_dir, const std::string& teacher,
         const std::string& resume) {
        const RunConfig c = config_from(config);
        py::gil_scoped_release release;
        run_distill(c, out_dir, teacher, resume);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("teacher") = "", py::arg("resume") = "");
  m.def(
      "sample",
      [](const std::string& checkpoint, const std::string& out_dir, int steps, std::size_t count,
         std::optional<int> label, std::uint64_t seed, double guidance, bool online) {
        SampleOptions o;
        o.checkpoint = checkpoint;
        o.out_dir = out_dir;
        o.steps = steps;
        o.count = count;
        o.label = label;
        o.seed = seed;
        o.guidance = guidance;
        o.online = online;
        py::gil_scoped_release release;
        run_sample(o);
      },
      py::arg("checkpoint"), py::arg("out_dir"), py::arg("steps") = 1, py::arg("count") = 1000,
      py::arg("label") = py::none(), py::arg("seed") = 0, py::arg("guidance") = 1.0, py::arg("online") = false);
  m.def(
      "evaluate",
      [](const py::object& config, const std::string& checkpoint, const std::string& out_dir) {
        const RunConfig c = config_from(config);
        nlohmann::json result;
        {
          py::gil_scoped_release release;
          result = run_eval(c, checkpoint, out_dir);
        }
        return json_to_py(result);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out_dir"));
  m.def(
      "ablate",
      [](const std::string& which, const py::object& config, const std::string& out_dir,
         const std::string& teacher) {
        const RunConfig c = config_from(config);
        py::gil_scoped_release release;
        run_ablate(which, c, out_dir, teacher);
      },
      py::arg("which"), py::arg("config"), py::arg("out_dir"), py::arg("teacher") = "");
}
