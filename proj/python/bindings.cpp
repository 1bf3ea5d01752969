#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "freeent/errors.hpp"
#include "freeent/experiment.hpp"
#include "freeent/moments.hpp"
#include "freeent/orbital.hpp"
#include "freeent/reference.hpp"
#include "freeent/sampler.hpp"

namespace py = pybind11;
using namespace freeent;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::object spec_to_py(const MomentSpec& s) {
  json j;
  to_json(j, s);
  return to_py(j);
}

ExperimentConfig config_from_py(const py::object& o) {
  if (py::isinstance<py::str>(o)) return ExperimentConfig::parse(o.cast<std::string>());
  return ExperimentConfig::from_json(from_py(o));
}

}  // namespace

PYBIND11_MODULE(_freeent, m) {
  m.doc() = "Free entropy estimators for random matrix ensembles";
  m.attr("__version__") = FREEENT_VERSION;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<InfeasibleTarget>(m, "InfeasibleTarget", base.ptr());
  py::register_exception<EstimatorFailure>(m, "EstimatorFailure", base.ptr());

  m.def("log_ball_volume", &log_ball_volume, py::arg("N"), py::arg("R"));
  m.def(
      "ball_volume_hit_or_miss",
      [](int N, double R, long points, std::uint64_t seed) {
        CounterRng rng(seed);
        const ScalarEstimate e = ball_volume_hit_or_miss(N, R, points, rng);
        return py::make_tuple(e.value, e.std_error);
      },
      py::arg("N"), py::arg("R"), py::arg("points"), py::arg("seed"));

  m.def(
      "semicircle_moments",
      [](double variance, int K, std::optional<double> R) { return spec_to_py(semicircle_moments(variance, K, R)); },
      py::arg("variance"), py::arg("K"), py::arg("R") = py::none());
  m.def(
      "arcsine_moments", [](double R, int K) { return spec_to_py(arcsine_moments(R, K)); }, py::arg("R"), py::arg("K"));
  m.def(
      "free_product_moments",
      [](const std::vector<py::object>& blocks, int K) {
        std::vector<MomentSpec> specs;
        for (const auto& b : blocks) specs.push_back(moment_spec_from_json(from_py(b)));
        return spec_to_py(free_product_moments(specs, K));
      },
      py::arg("blocks"), py::arg("K"));
  m.def(
      "moment_distance",
      [](const py::object& a, const py::object& b, int K) {
        return moment_distance(moment_spec_from_json(from_py(a)), moment_spec_from_json(from_py(b)), K);
      },
      py::arg("a"), py::arg("b"), py::arg("K"));

  m.def(
      "sample_spectra",
      [](int n, int N, double R, const std::string& V, double beta, long steps, long burnin, long thin,
         std::uint64_t seed) {
        ChainOptions co;
        co.steps = steps;
        co.burnin = burnin;
        co.thin = thin;
        CounterRng rng(seed);
        const ChainResult r = mcmc_chain(GibbsModel(n, N, R, NcPoly::parse(n, V), beta), co, rng);
        std::vector<Eigen::MatrixXd> blocks(static_cast<std::size_t>(n),
                                            Eigen::MatrixXd(static_cast<Eigen::Index>(r.samples.size()), N));
        for (std::size_t s = 0; s < r.samples.size(); ++s)
          for (int b = 0; b < n; ++b)
            blocks[static_cast<std::size_t>(b)].row(static_cast<Eigen::Index>(s)) =
                r.samples[s].spectra[static_cast<std::size_t>(b)].transpose();
        return py::make_tuple(blocks, r.diagnostics.acceptance);
      },
      py::arg("n"), py::arg("N"), py::arg("R"), py::arg("V") = "0", py::arg("beta") = 1.0, py::arg("steps") = 4000,
      py::arg("burnin") = 1000, py::arg("thin") = 1, py::arg("seed") = 0,
      "Per-block arrays of ascending spectra (samples x N) and the acceptance rate.");

  m.def("log_hciz", &log_hciz, py::arg("a"), py::arg("b"), py::arg("t"));

  m.def(
      "scalar_maxent",
      [](const std::vector<std::pair<int, double>>& constraints, double R, int grid_size) {
        std::vector<MomentConstraint> c;
        for (const auto& [p, t] : constraints) c.push_back({p, t});
        const MaxentResult r = scalar_maxent_oracle(c, R, grid_size);
        py::dict d;
        d["entropy"] = r.entropy;
        d["dual"] = r.dual;
        d["gap"] = r.gap;
        d["lambda"] = r.lambda;
        d["grid"] = r.grid;
        d["density"] = r.density;
        return d;
      },
      py::arg("constraints"), py::arg("R"), py::arg("grid_size") = 20000,
      "Maximum entropy on [-R, R] subject to (power, target) moment constraints.");

  m.def(
      "parse_config", [](const std::string& yaml) { return to_py(ExperimentConfig::parse(yaml).to_json()); },
      py::arg("yaml"));
  m.def(
      "config_hash", [](const py::object& cfg) { return config_from_py(cfg).hash(); }, py::arg("config"));
  m.def(
      "run_experiment",
      [](const py::object& cfg, int threads) {
        const ExperimentConfig c = config_from_py(cfg);
        RunRecord r;
        {
          py::gil_scoped_release release;
          r = run_experiment(c, RunOptions{threads});
        }
        py::list out;
        for (const json& j : r.results) out.append(to_py(j));
        return out;
      },
      py::arg("config"), py::arg("threads") = 1,
      "Runs a configuration (YAML text or dict) and returns its result records.");
  m.def(
      "plot_table",
      [](const py::list& results, const std::string& kind) {
        RunRecord r;
        for (const auto& item : results) r.results.push_back(from_py(py::reinterpret_borrow<py::object>(item)));
        const PlotTable t = emit_plot_data(r, plot_kind_from_string(kind));
        return py::make_tuple(t.header, t.rows);
      },
      py::arg("results"), py::arg("kind"), "(header, rows) of a plot table built from result records.");
}
