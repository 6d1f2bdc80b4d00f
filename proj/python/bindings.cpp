#include <algorithm>
#include <map>
#include <set>
#include <string>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "isbor/data.hpp"
#include "isbor/errors.hpp"
#include "isbor/eval.hpp"
#include "isbor/trainer.hpp"

namespace py = pybind11;
using namespace isbor;

namespace {

using IntVector = Eigen::Matrix<long long, Eigen::Dynamic, 1>;

// Labels may be any integers; categories follow their sorted order.
Dataset make_dataset(const RowMatrix& X, const IntVector& y) {
  if (X.rows() != y.size())
    throw InputError("X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
  Dataset d;
  d.X = X;
  std::set<long long> distinct(y.begin(), y.end());
  d.label_values.assign(distinct.begin(), distinct.end());
  std::map<long long, int> rank;
  for (std::size_t k = 0; k < d.label_values.size(); ++k) rank[d.label_values[k]] = static_cast<int>(k) + 1;
  d.r = static_cast<int>(d.label_values.size());
  for (long long v : y) d.y.push_back(rank[v]);
  validate(d);
  return d;
}

IntVector to_values(const ModelState& m, const Labels& cats) {
  IntVector out(static_cast<Index>(cats.size()));
  for (std::size_t i = 0; i < cats.size(); ++i)
    out[static_cast<Index>(i)] =
        static_cast<int>(m.label_values.size()) >= cats[i] ? m.label_values[cats[i] - 1] : cats[i];
  return out;
}

void check_dim(const ModelState& m, const RowMatrix& X) {
  if (X.cols() != m.dim())
    throw InputError("model expects d = " + std::to_string(m.dim()) + " features, got " +
                     std::to_string(X.cols()));
}

TrainConfig make_config(int max_its, double min_delta, std::uint64_t seed, bool standardize,
                        bool reestimate) {
  TrainConfig c;
  c.max_its = max_its;
  c.min_delta = min_delta;
  c.seed = seed;
  c.standardize = standardize;
  c.enable_reestimate = reestimate;
  return c;
}

}  // namespace

PYBIND11_MODULE(_isbor, mod) {
  mod.doc() = "Sparse Bayesian ordinal regression with RBF bases";

  py::register_exception<InputError>(mod, "InputError", PyExc_ValueError);
  py::register_exception<ParseError>(mod, "ParseError", PyExc_ValueError);
  py::register_exception<NumericError>(mod, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ConvergenceError>(mod, "ConvergenceError", PyExc_RuntimeError);

  py::class_<ModelState>(mod, "Model")
      .def_static(
          "fit",
          [](const RowMatrix& X, const IntVector& y, double theta, int max_its, double min_delta,
             std::uint64_t seed, bool standardize, bool reestimate) {
            const Dataset d = make_dataset(X, y);
            const TrainConfig c = make_config(max_its, min_delta, seed, standardize, reestimate);
            py::gil_scoped_release release;
            return fit(d, c, theta);
          },
          py::arg("X"), py::arg("y"), py::arg("theta"), py::arg("max_its") = 500,
          py::arg("min_delta") = 1e-3, py::arg("seed") = 0, py::arg("standardize") = true,
          py::arg("reestimate") = true)
      .def_static("load", &load_model_file, py::arg("path"))
      .def_static("loads", &load_model, py::arg("text"))
      .def("save", [](const ModelState& m, const std::string& path) { save_model_file(m, path); },
           py::arg("path"))
      .def("dumps", [](const ModelState& m) { return save_model(m); })
      .def("predict",
           [](const ModelState& m, const RowMatrix& X) {
             check_dim(m, X);
             return to_values(m, predict_labels(m, X));
           },
           py::arg("X"))
      .def("decision_function",
           [](const ModelState& m, const RowMatrix& X) {
             check_dim(m, X);
             return predict_scores(m, X);
           },
           py::arg("X"))
      .def("predict_proba",
           [](const ModelState& m, const RowMatrix& X) {
             check_dim(m, X);
             Matrix P(X.rows(), m.categories());
             std::vector<double> x(static_cast<std::size_t>(X.cols()));
             for (Index i = 0; i < X.rows(); ++i) {
               std::copy(X.row(i).data(), X.row(i).data() + X.cols(), x.begin());
               const auto p = predict_proba(m, x);
               for (int k = 0; k < m.categories(); ++k) P(i, k) = p[static_cast<std::size_t>(k)];
             }
             return P;
           },
           py::arg("X"))
      .def_property_readonly("n_active", &ModelState::size)
      .def_property_readonly("dim", &ModelState::dim)
      .def_property_readonly("categories", &ModelState::categories)
      .def_property_readonly("active", [](const ModelState& m) { return m.active; })
      .def_property_readonly("weights", [](const ModelState& m) { return m.w; })
      .def_property_readonly("alpha", [](const ModelState& m) { return m.alpha; })
      .def_property_readonly("thresholds", [](const ModelState& m) { return m.b.cutpoints(); })
      .def_property_readonly("sigma", [](const ModelState& m) { return m.sigma; })
      .def_property_readonly("theta", [](const ModelState& m) { return m.kernel.theta; })
      .def_property_readonly("label_values", [](const ModelState& m) { return m.label_values; })
      .def_property_readonly("log_marginal_history",
                             [](const ModelState& m) { return m.log_marginal_history; })
      .def_property_readonly("iterations", [](const ModelState& m) { return m.info.iterations; })
      .def_property_readonly("stop_reason", [](const ModelState& m) { return m.info.stop_reason; })
      .def("__repr__", [](const ModelState& m) {
        return "<Model d=" + std::to_string(m.dim()) + " r=" + std::to_string(m.categories()) +
               " M=" + std::to_string(m.size()) + ">";
      });

  mod.def(
      "generate_synthetic",
      [](Index n, std::uint64_t seed) {
        const Dataset d = generate_synthetic(n, seed);
        IntVector y(d.size());
        for (Index i = 0; i < d.size(); ++i) y[i] = d.y[i];
        return py::make_tuple(d.X, y);
      },
      py::arg("n"), py::arg("seed") = 0, "Points on [0, 10]^2 with saddle-score labels 1..5.");

  mod.def(
      "cross_validate",
      [](const RowMatrix& X, const IntVector& y, std::vector<double> thetas, int folds,
         std::uint64_t seed, int max_its) {
        const Dataset d = make_dataset(X, y);
        TrainConfig c = make_config(max_its, 1e-3, seed, true, true);
        CvResult res;
        {
          py::gil_scoped_release release;
          res = cross_validate(d, thetas, folds, seed, c);
        }
        py::list table;
        for (const auto& row : res.table) {
          py::dict r;
          r["theta"] = row.theta;
          r["mean_mae"] = row.mean_mae;
          r["fold_mae"] = row.fold_mae;
          r["errors"] = row.errors;
          table.append(r);
        }
        return py::make_tuple(res.best_theta, table);
      },
      py::arg("X"), py::arg("y"), py::arg("thetas") = kNarrowThetaGrid, py::arg("folds") = 5,
      py::arg("seed") = 0, py::arg("max_its") = 500,
      "Returns (best_theta, per-theta rows).");

  mod.def(
      "mae",
      [](const IntVector& a, const IntVector& b) {
        if (a.size() != b.size()) throw InputError("mae: length mismatch");
        if (a.size() == 0) throw InputError("mae: empty input");
        return (a - b).cwiseAbs().cast<double>().mean();
      },
      py::arg("y_true"), py::arg("y_pred"));
}
