#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sxgeo/commands.hpp"
#include "sxgeo/config.hpp"
#include "sxgeo/error.hpp"
#include "sxgeo/eval.hpp"
#include "sxgeo/gwr.hpp"
#include "sxgeo/simnet.hpp"
#include "sxgeo/spatial_stats.hpp"
#include "sxgeo/synth.hpp"
#include "sxgeo/tree.hpp"
#include "sxgeo/treeshap.hpp"

namespace py = pybind11;
using namespace sxgeo;

namespace {

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["model"] = m.model;
  d["variant"] = m.variant;
  d["r2_train"] = m.r2_train;
  d["r2_test"] = m.r2_test;
  d["rmse_train"] = m.rmse_train;
  d["rmse_test"] = m.rmse_test;
  d["residual_moran_i"] = m.residual_moran_i;
  d["residual_moran_i_test"] = m.residual_moran_i_test;
  d["modularity"] = m.modularity;
  d["communities"] = m.communities;
  d["leaves"] = m.leaves;
  d["depth"] = m.depth;
  d["gwr_bandwidth"] = m.gwr_bandwidth;
  return d;
}

// Builds an experiment config from the same keys the CLI accepts.
ExperimentConfig experiment_from_kwargs(const py::kwargs& kwargs) {
  RunConfig c;
  c.set("seed", "0");
  for (const auto& [k, v] : kwargs) c.set(py::str(k), py::str(v));
  return experiment_from(c);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Geospatial self-explaining regression trees";

  static py::exception<Error> base_error(m, "SxgeoError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base_error, e.what());
    }
  });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("feature_names", &Dataset::feature_names)
      .def_readonly("ids", &Dataset::ids)
      .def_readonly("target_name", &Dataset::target_name)
      .def_readonly("X", &Dataset::X)
      .def_readonly("y", &Dataset::y)
      .def_property_readonly("loc_idx", [](const Dataset& d) { return std::vector<Index>{d.loc_idx[0], d.loc_idx[1]}; })
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("p", &Dataset::p)
      .def_property_readonly("standardized", &Dataset::standardized)
      .def("locations", &Dataset::locations)
      .def("subset", [](const Dataset& d, const std::vector<Index>& rows) { return d.subset(rows); });

  m.def(
      "load_csv",
      [](const std::filesystem::path& path, const std::string& id, const std::string& x, const std::string& y,
         const std::string& target, const std::vector<std::string>& attributes) {
        return load_csv(path, Schema{id, x, y, target, attributes});
      },
      py::arg("path"), py::arg("id") = "id", py::arg("x") = "x", py::arg("y") = "y", py::arg("target") = "target",
      py::arg("attributes") = std::vector<std::string>{});
  m.def("zscore", &zscore, py::arg("dataset"));

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& path, Index n, std::uint64_t seed, const std::string& field, double noise,
         double autocorrelation) {
        SynthParams p;
        p.n = n;
        p.seed = seed;
        p.field = field;
        p.noise = noise;
        p.autocorrelation = autocorrelation;
        write_table(generate_synthetic(p), path);
      },
      "Writes a synthetic dataset (id, x, y, a1..a6, target) to `path`.", py::arg("path"), py::arg("n") = 400,
      py::arg("seed") = 0, py::arg("field") = "regimes", py::arg("noise") = 0.5, py::arg("autocorrelation") = 0.7);

  py::class_<SpatialWeights>(m, "SpatialWeights")
      .def_property_readonly("n", &SpatialWeights::n)
      .def_property_readonly("total", &SpatialWeights::total)
      .def_property_readonly("nnz", &SpatialWeights::nnz);
  m.def("knn_weights", &knn_weights, py::arg("locations"), py::arg("k"));
  m.def(
      "morans_i", [](const Vector& v, const SpatialWeights& w) { return morans_i(v, w); }, py::arg("values"),
      py::arg("weights"));

  m.def(
      "fit_gwr", [](const Dataset& d, double bandwidth) { return fit_gwr(d, bandwidth).B; }, py::arg("dataset"),
      py::arg("bandwidth"));
  m.def("select_bandwidth", [](const Dataset& d, const std::vector<double>& grid) { return select_bandwidth(d, grid); },
        py::arg("dataset"), py::arg("grid"));

  py::class_<GeoTree>(m, "GeoTree")
      .def("predict", &GeoTree::predict, py::arg("X"))
      .def("depth", &GeoTree::depth)
      .def("n_leaves", [](const GeoTree& t) { return t.leaves().size(); })
      .def_property_readonly("p", &GeoTree::p)
      .def_readonly("feature_names", &GeoTree::feature_names)
      .def("to_json", [](const GeoTree& t) { return serialize(t); })
      .def_static("from_json", [](const std::string& text) { return deserialize(text); }, py::arg("text"));

  m.def(
      "shap_values",
      [](const GeoTree& t, const RowMatrix& fg, const RowMatrix& bg) {
        const AttributionMatrix a = shap_values(t, fg, bg);
        return py::make_tuple(a.phi, a.base);
      },
      "Exact interventional Shapley values; returns (phi, base).", py::arg("tree"), py::arg("foreground"),
      py::arg("background"));

  m.def(
      "maximize_modularity",
      [](const Eigen::MatrixXd& adjacency, double gamma, std::uint64_t seed) {
        const CommunityPartition p = maximize_modularity(SimilarityNetwork::from_dense(adjacency), gamma, seed);
        return py::make_tuple(p.labels, p.q);
      },
      "Returns (labels, Q) for a symmetric similarity matrix with entries in [0, 1].", py::arg("adjacency"),
      py::arg("gamma") = 1.0, py::arg("seed") = 0);
  m.def(
      "modularity_score",
      [](const Eigen::MatrixXd& adjacency, const std::vector<int>& labels, double gamma) {
        return modularity_score(SimilarityNetwork::from_dense(adjacency), labels, gamma);
      },
      py::arg("adjacency"), py::arg("labels"), py::arg("gamma") = 1.0);

  m.def("attribution_entropy", [](const std::vector<double>& a) { return attribution_entropy(a); });
  m.def("gini_coefficient", [](const std::vector<double>& a) { return gini_coefficient(a); });

  m.def(
      "run_experiment",
      [](const Dataset& d, const py::kwargs& kwargs) {
        const ExperimentResult r = run_experiment(d, experiment_from_kwargs(kwargs));
        return py::make_tuple(r.tree, metrics_dict(r.metrics));
      },
      "Holdout experiment on a standardized dataset; keyword arguments use the CLI config keys. Returns (tree, "
      "metrics).",
      py::arg("dataset"));

  m.def(
      "run_command",
      [](const std::string& name, const std::string& config_text) {
        return run_command(name, RunConfig::parse(config_text));
      },
      "Runs a CLI command from `key = value` config text and returns its exit code.", py::arg("name"),
      py::arg("config_text"));
}
