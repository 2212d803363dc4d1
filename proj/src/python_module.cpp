#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

#include "cbgbdt/booster.hpp"
#include "cbgbdt/cli.hpp"
#include "cbgbdt/data.hpp"
#include "cbgbdt/gradcheck.hpp"
#include "cbgbdt/losses.hpp"
#include "cbgbdt/metrics.hpp"
#include "cbgbdt/tuner.hpp"

namespace py = pybind11;
using namespace cbgbdt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// NaN cells become missing values.
FeatureMatrix to_features(const Array& x) {
  if (x.ndim() != 2) throw ShapeError("X must be a 2-D array");
  const auto n = static_cast<std::size_t>(x.shape(0)), m = static_cast<std::size_t>(x.shape(1));
  std::vector<double> v(x.data(), x.data() + n * m);
  std::vector<std::uint8_t> miss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) {
      if (miss.empty()) miss.assign(v.size(), 0);
      miss[i] = 1;
      v[i] = 0.0;
    }
  }
  return {n, m, std::move(v), std::move(miss)};
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Dataset make_dataset(const Array& x, const py::array& y, const std::string& task, int n_classes) {
  const TaskKind kind = parse_task_kind(task);
  FeatureMatrix fm = to_features(x);
  LabelBlock labels;
  if (kind == TaskKind::MultiLabel) {
    auto a = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(y);
    if (!a || a.ndim() != 2) throw ShapeError("multi-label y must be a 2-D 0/1 array");
    labels = LabelBlock::multilabel(std::vector<std::uint8_t>(a.data(), a.data() + a.size()),
                                    static_cast<std::size_t>(a.shape(0)), static_cast<int>(a.shape(1)));
  } else {
    auto a = py::array_t<int, py::array::c_style | py::array::forcecast>::ensure(y);
    if (!a || a.ndim() != 1) throw ShapeError("y must be a 1-D array of class indices");
    std::vector<int> v(a.data(), a.data() + a.size());
    if (kind == TaskKind::Binary) {
      labels = LabelBlock::binary(std::move(v));
    } else {
      const int k = n_classes > 0 ? n_classes : *std::max_element(v.begin(), v.end()) + 1;
      labels = LabelBlock::multiclass(std::move(v), k);
    }
  }
  std::vector<std::string> names;
  for (std::size_t f = 0; f < fm.cols(); ++f) names.push_back("f" + std::to_string(f));
  return {std::move(fm), std::move(labels), std::move(names)};
}

LossParams loss_params(const py::kwargs& kw) {
  LossParams lp;
  for (const auto& [k, v] : kw) {
    const std::string key = py::str(k);
    const double value = v.cast<double>();
    if (key == "w") lp.w = value;
    else if (key == "gamma") lp.gamma = value;
    else if (key == "gamma_pos") lp.gamma_pos = value;
    else if (key == "gamma_neg") lp.gamma_neg = value;
    else if (key == "margin") lp.margin = value;
    else if (key == "beta") lp.beta = value;
    else throw ParamError("unknown loss parameter '" + key + "'");
  }
  return lp;
}

py::dict record_dict(const TrialRecord& r) {
  py::dict d;
  d["trial"] = r.index;
  d["params"] = r.params;
  d["fold_f1"] = r.fold_f1;
  d["fold_best_iteration"] = r.fold_best_iteration;
  d["mean_f1"] = r.mean_f1;
  d["status"] = r.failed ? "failed" : "ok";
  if (r.failed) d["error"] = r.error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cbgbdt, m) {
  m.doc() = "Gradient-boosted trees with class-balanced losses";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<LoadError>(m, "LoadError", error.ptr());
  py::register_exception<LabelError>(m, "LabelError", error.ptr());
  py::register_exception<TaskError>(m, "TaskError", error.ptr());
  py::register_exception<SplitError>(m, "SplitError", error.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", error.ptr());
  py::register_exception<ParamError>(m, "ParamError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("X"), py::arg("y"), py::arg("task") = "binary", py::arg("n_classes") = 0)
      .def_property_readonly("n_samples", &Dataset::size)
      .def_property_readonly("n_features", [](const Dataset& d) { return d.x.cols(); })
      .def_property_readonly("task", [](const Dataset& d) { return task_kind_name(d.task().kind); })
      .def_property_readonly("n_classes", [](const Dataset& d) { return d.task().n_classes; })
      .def_readonly("feature_names", &Dataset::feature_names)
      .def("imbalance_ratio", &imbalance_ratio);

  m.def(
      "load_csv",
      [](const std::string& path, std::vector<std::string> label_columns, const std::string& label_prefix,
         const std::string& task, int n_classes) {
        LabelSpec spec;
        spec.columns = std::move(label_columns);
        spec.prefix = label_prefix;
        if (spec.columns.empty() && spec.prefix.empty()) spec.columns = {"label"};
        return load_csv(path, spec, parse_task_kind(task), n_classes);
      },
      py::arg("path"), py::arg("label_columns") = std::vector<std::string>{}, py::arg("label_prefix") = "",
      py::arg("task") = "binary", py::arg("n_classes") = 0);
  m.def(
      "load_libsvm",
      [](const std::string& path, const std::string& task, int n_classes, std::size_t n_features) {
        return load_libsvm(path, parse_task_kind(task), n_classes, n_features);
      },
      py::arg("path"), py::arg("task") = "binary", py::arg("n_classes") = 0, py::arg("n_features") = 0);

  py::class_<Fold>(m, "Fold").def_readonly("fit", &Fold::fit).def_readonly("validation", &Fold::validation);
  py::class_<SplitPlan>(m, "SplitPlan")
      .def_readonly("seed", &SplitPlan::seed)
      .def_readonly("train", &SplitPlan::train)
      .def_readonly("test", &SplitPlan::test)
      .def_readonly("folds", &SplitPlan::folds)
      .def("to_json", &SplitPlan::to_json)
      .def_static("from_json", &SplitPlan::from_json);
  m.def(
      "make_split_plan",
      [](const Dataset& d, std::uint64_t seed, double test_fraction, int k, bool stratify) {
        return make_split_plan(d, {seed, test_fraction, k, stratify});
      },
      py::arg("dataset"), py::arg("seed") = 0, py::arg("test_fraction") = 0.2, py::arg("k") = 5,
      py::arg("stratify") = true);

  py::class_<LossSpec>(m, "LossSpec")
      .def_property_readonly("kind", [](const LossSpec& s) { return loss_kind_name(s.kind()); })
      .def_property_readonly("class_weights", &LossSpec::class_weights);
  m.def(
      "make_loss",
      [](const std::string& kind, const Dataset& d, py::kwargs kw) {
        std::vector<std::size_t> rows(d.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return make_loss(parse_loss_kind(kind), d, rows, loss_params(kw));
      },
      py::arg("kind"), py::arg("dataset"));
  m.def(
      "loss_grad_hess",
      [](const LossSpec& s, std::vector<double> y, std::vector<double> z) {
        const GradHess g = loss_grad_hess(s, y, z);
        return py::make_tuple(loss_value(s, y, z), g.grad, g.hess);
      },
      py::arg("loss"), py::arg("y"), py::arg("z"));
  m.def("supports", [](const std::string& kind, const std::string& task) {
    return supports(parse_loss_kind(kind), parse_task_kind(task));
  });

  py::class_<BoostParams>(m, "BoostParams")
      .def(py::init<>())
      .def_readwrite("n_rounds", &BoostParams::n_rounds)
      .def_readwrite("learning_rate", &BoostParams::learning_rate)
      .def_readwrite("max_depth", &BoostParams::max_depth)
      .def_readwrite("max_leaves", &BoostParams::max_leaves)
      .def_readwrite("lambda_l2", &BoostParams::lambda_l2)
      .def_readwrite("alpha_l1", &BoostParams::alpha_l1)
      .def_readwrite("min_samples_leaf", &BoostParams::min_samples_leaf)
      .def_readwrite("max_bin", &BoostParams::max_bin)
      .def_readwrite("subsample", &BoostParams::subsample)
      .def_readwrite("early_stopping_rounds", &BoostParams::early_stopping_rounds)
      .def_readwrite("seed", &BoostParams::seed)
      .def_readwrite("h_floor", &BoostParams::h_floor)
      .def_readwrite("tree_per_output", &BoostParams::tree_per_output)
      .def_readwrite("threads", &BoostParams::threads);

  py::class_<Ensemble>(m, "Ensemble")
      .def_readonly("best_iteration", &Ensemble::best_iteration)
      .def_readonly("rounds_trained", &Ensemble::rounds_trained)
      .def_readonly("base_score", &Ensemble::base_score)
      .def_property_readonly("n_trees", [](const Ensemble& e) { return e.trees.size(); })
      .def_property_readonly("train_loss", [](const Ensemble& e) { return e.history.train_loss; })
      .def_property_readonly("valid_loss", [](const Ensemble& e) { return e.history.valid_loss; })
      .def(
          "predict_raw", [](const Ensemble& e, const Array& x, int rounds) { return to_array(e.predict_raw(to_features(x), rounds)); },
          py::arg("X"), py::arg("rounds") = -1)
      .def(
          "predict_proba", [](const Ensemble& e, const Array& x, int rounds) { return to_array(e.predict_proba(to_features(x), rounds)); },
          py::arg("X"), py::arg("rounds") = -1)
      .def("to_json", &Ensemble::to_json)
      .def_static("from_json", &Ensemble::from_json)
      .def("save", &Ensemble::save)
      .def_static("load", &Ensemble::load);

  m.def(
      "fit",
      [](const Dataset& d, const LossSpec& loss, const BoostParams& params, std::optional<std::vector<std::size_t>> train,
         std::optional<std::vector<std::size_t>> valid) {
        py::gil_scoped_release release;
        if (!train) {
          train.emplace(d.size());
          for (std::size_t i = 0; i < d.size(); ++i) (*train)[i] = i;
        }
        return fit(d, loss, params, *train, valid ? std::span<const std::size_t>(*valid) : std::span<const std::size_t>{});
      },
      py::arg("dataset"), py::arg("loss"), py::arg("params") = BoostParams{}, py::arg("train_rows") = py::none(),
      py::arg("valid_rows") = py::none());

  m.def(
      "f1_score",
      [](const Array& prob, const Dataset& d, const std::vector<std::size_t>& rows, double threshold,
         const std::string& averaging) {
        Matrix p(static_cast<std::size_t>(prob.shape(0)), prob.ndim() == 2 ? static_cast<std::size_t>(prob.shape(1)) : 1);
        std::copy(prob.data(), prob.data() + prob.size(), p.data.begin());
        const Averaging avg = averaging.empty() ? default_averaging(d.task()) : parse_averaging(averaging);
        return f1(p, d.y, rows, threshold, avg).value;
      },
      py::arg("prob"), py::arg("dataset"), py::arg("rows"), py::arg("threshold") = 0.5, py::arg("averaging") = "");
  m.def(
      "improvement",
      [](const std::vector<double>& bmp, const std::vector<double>& cmp) {
        const Improvement i = improvement(bmp, cmp);
        return py::make_tuple(i.bmp, i.cmp, i.delta);
      },
      py::arg("bmp_runs"), py::arg("cmp_runs"));

  m.def(
      "run_search",
      [](const Dataset& d, const SplitPlan& plan, const std::string& loss, const std::string& profile, int n_trials,
         std::uint64_t seed, int threads) {
        SearchOptions o;
        o.n_trials = n_trials;
        o.seed = seed;
        o.threads = threads;
        SearchResult r;
        {
          py::gil_scoped_release release;
          r = run_search(d, plan, parse_loss_kind(loss), parse_profile(profile), o);
        }
        py::list records;
        for (const auto& rec : r.records) records.append(record_dict(rec));
        return py::make_tuple(r.best, records);
      },
      py::arg("dataset"), py::arg("plan"), py::arg("loss"), py::arg("profile") = "leaf-wise", py::arg("n_trials") = 100,
      py::arg("seed") = 0, py::arg("threads") = 1);

  m.def(
      "gencheck",
      [](int draws, std::uint64_t seed) {
        std::ostringstream log;
        const int code = cmd_gencheck({draws, seed, 1.0}, log);
        return py::make_tuple(code == 0, log.str());
      },
      py::arg("draws") = 1000, py::arg("seed") = 0);
}
