// Python bindings: design space, workload oracle, metrics, configuration,
// checkpoint inference and the pipeline stages.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "metadse/checkpoint.hpp"
#include "metadse/design_space.hpp"
#include "metadse/errors.hpp"
#include "metadse/evaluation.hpp"
#include "metadse/pipeline.hpp"
#include "metadse/run_config.hpp"
#include "metadse/text.hpp"
#include "metadse/workload_oracle.hpp"

namespace py = pybind11;
using namespace metadse;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) v(i, j) = m(i, j);
  return out;
}

Matrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  auto v = a.unchecked<2>();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = v(i, j);
  return m;
}

RunConfig make_config(const std::map<std::string, std::string>& overrides, const std::string& space_text) {
  RunConfig cfg;
  cfg.space_text = space_text;
  cfg.apply(overrides);
  cfg.validate();
  return cfg;
}

// A loaded checkpoint that predicts in label units.
struct Predictor {
  Checkpoint ckpt;
  Surrogate model;

  explicit Predictor(const std::string& path) : ckpt(load_checkpoint(path)), model(ckpt.model()) {}

  py::array_t<double> predict(const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
                              bool use_mask) const {
    const Matrix x = from_numpy(features);
    const ArchMask* mask = use_mask && ckpt.mask ? &*ckpt.mask : nullptr;
    const Matrix raw = model.forward(ckpt.theta, x, mask).outputs;
    const auto cols = ckpt.scaler.columns();
    Matrix labels(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.rows(); ++i)
      for (std::size_t j = 0; j < raw.cols(); ++j) labels(i, j) = ckpt.scaler.to_label(cols[j], raw(i, j));
    return to_numpy(labels);
  }
};

py::dict report_dict(const EvalReport& r) {
  py::dict out;
  for (const auto& w : r.workloads) {
    py::dict per;
    for (const auto& [name, m] : w.outputs) {
      py::dict metrics;
      metrics["rmse"] = py::make_tuple(m.rmse.mean, m.rmse.half_width);
      metrics["mape"] = py::make_tuple(m.mape.mean, m.mape.half_width);
      metrics["ev"] = py::make_tuple(m.ev.mean, m.ev.half_width);
      per[py::str(name)] = metrics;
    }
    per["tasks"] = w.tasks;
    per["failed"] = w.failed;
    out[py::str(w.workload_id)] = per;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MetaDSE core: meta-learned surrogate and workload-adaptive mask for CPU design-space exploration";

  auto base = py::register_exception<Error>(m, "MetaDSEError", PyExc_RuntimeError);
  static py::exception<Error> usage(m, "UsageError", base.ptr());
  static py::exception<Error> data(m, "DataError", base.ptr());
  static py::exception<Error> numeric(m, "NumericError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = e.kind() + ": " + e.what();
      switch (e.error_class()) {
        case ErrorClass::Usage: PyErr_SetString(usage.ptr(), msg.c_str()); break;
        case ErrorClass::Data: PyErr_SetString(data.ptr(), msg.c_str()); break;
        case ErrorClass::Numeric: PyErr_SetString(numeric.ptr(), msg.c_str()); break;
      }
    }
  });

  py::class_<DesignSpace>(m, "DesignSpace")
      .def_static("canonical", &canonical_space)
      .def_static("from_text", &DesignSpace::from_text)
      .def("to_text", &DesignSpace::to_text)
      .def_property_readonly("dims", &DesignSpace::dims)
      .def_property_readonly("cardinality", &DesignSpace::cardinality)
      .def("names",
           [](const DesignSpace& s) {
             std::vector<std::string> out;
             for (const auto& p : s.params()) out.push_back(p.name);
             return out;
           })
      .def("candidates",
           [](const DesignSpace& s, std::size_t i) {
             std::vector<std::string> out;
             for (std::size_t k = 0; k < s.param(i).size(); ++k) out.push_back(s.param(i).format_candidate(k));
             return out;
           })
      .def("encode", [](const DesignSpace& s, const std::vector<std::uint32_t>& idx) { return s.encode({idx}); })
      .def("decode", [](const DesignSpace& s, const FeatureVector& f) { return s.decode(f).indices; })
      .def("sample", [](const DesignSpace& s, std::size_t n, std::uint64_t seed) {
        std::vector<std::vector<std::uint32_t>> out;
        for (auto& p : s.sample_uniform(n, seed)) out.push_back(std::move(p.indices));
        return out;
      }, py::arg("n"), py::arg("seed"));

  py::class_<WorkloadSurface>(m, "WorkloadSurface")
      .def_readonly("id", &WorkloadSurface::id)
      .def_readonly("noise", &WorkloadSurface::noise)
      .def(
          "evaluate",
          [](const WorkloadSurface& w, const DesignSpace& s, const std::vector<std::uint32_t>& idx,
             std::uint64_t sample_seed) {
            const Labels l = w.evaluate(s, {idx}, sample_seed);
            return py::make_tuple(l.ipc, l.power);
          },
          py::arg("space"), py::arg("point"), py::arg("sample_seed") = 0);
  m.def(
      "gen_family",
      [](std::size_t n, double d, double noise, std::size_t interactions, std::uint64_t seed) {
        return gen_family(n, FamilyOptions{d, noise, interactions}, seed);
      },
      py::arg("n"), py::arg("dissimilarity") = 0.6, py::arg("noise") = 0.02, py::arg("interactions") = 8,
      py::arg("seed") = 1);

  m.def("wasserstein_1d", &wasserstein_1d, py::arg("a"), py::arg("b"));
  m.def("rmse", [](const std::vector<double>& p, const std::vector<double>& y) { return rmse(p, y); });
  m.def("mape", [](const std::vector<double>& p, const std::vector<double>& y) { return mape(p, y); });
  m.def("explained_variance",
        [](const std::vector<double>& p, const std::vector<double>& y) { return explained_variance(p, y); });
  m.def("mean_ci", [](const std::vector<double>& v) {
    const MeanCi ci = mean_ci(v);
    return py::make_tuple(ci.mean, ci.half_width, ci.n);
  });
  m.def("geomean", [](const std::vector<double>& v) { return geomean(v); });

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init(&make_config), py::arg("overrides") = std::map<std::string, std::string>{},
           py::arg("space_text") = "")
      .def_static("load", &load_run_config)
      .def("set", &RunConfig::set)
      .def("validate", &RunConfig::validate)
      .def("to_text", &RunConfig::to_text)
      .def("hash", &RunConfig::hash)
      .def("seeds", &RunConfig::seeds)
      .def_readwrite("threads", &RunConfig::threads);

  py::class_<Predictor>(m, "Predictor")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("predict", &Predictor::predict, py::arg("features"), py::arg("use_mask") = true,
           "Predicted labels (ipc, then power when trained) for rows of encoded features.")
      .def_property_readonly("params", [](const Predictor& p) { return p.ckpt.params; })
      .def_property_readonly("outputs", [](const Predictor& p) { return to_string(p.ckpt.config.outputs); })
      .def_property_readonly("metadata", [](const Predictor& p) { return p.ckpt.metadata; })
      .def_property_readonly("mask", [](const Predictor& p) -> py::object {
        if (!p.ckpt.mask) return py::none();
        return to_numpy(p.ckpt.mask->m);
      });

  m.def("gen_data", [](const RunConfig& c, const std::string& out) { gen_data_stage(c, out); }, py::arg("config"),
        py::arg("out_dir"));
  m.def(
      "pretrain",
      [](const RunConfig& c, const std::string& data, const std::string& out) {
        PretrainSummary s;
        {
          py::gil_scoped_release release;
          s = pretrain_stage(c, data, out);
        }
        py::dict d;
        d["train"] = s.train;
        d["val"] = s.val;
        d["test"] = s.test;
        d["best_epoch"] = s.best_epoch;
        d["best_val_loss"] = s.best_val;
        return d;
      },
      py::arg("config"), py::arg("data_dir"), py::arg("out_dir"));
  m.def(
      "extract_mask",
      [](const RunConfig& c, const std::string& ckpt, const std::string& cand, const std::string& out) {
        return extract_mask_stage(c, ckpt, cand, out);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("candidates"), py::arg("out"));
  m.def(
      "evaluate",
      [](const RunConfig& c, const std::string& ckpt, const std::string& mask, const std::string& data,
         const std::string& workloads, const std::string& out) {
        const auto r = evaluate_stage(c, ckpt, mask, data, workloads, out);
        return py::make_tuple(r.arm, report_dict(r.report), r.markdown);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("mask") = "", py::arg("data_dir") = "",
      py::arg("workloads") = "", py::arg("out_dir") = ".");
  m.def(
      "ablate",
      [](const RunConfig& c, const std::string& ckpt, const std::string& mask, bool identity, const std::string& data,
         const std::string& workloads, const std::string& out) {
        const auto r = ablate_stage(c, ckpt, mask, identity, data, workloads, out);
        py::dict arms;
        for (std::size_t i = 0; i < r.result.reports.size(); ++i)
          arms[py::str(r.result.arms[i])] = report_dict(r.result.reports[i]);
        return py::make_tuple(arms, r.markdown);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("mask") = "", py::arg("identity_mask") = false,
      py::arg("data_dir") = "", py::arg("workloads") = "", py::arg("out_dir") = ".");
  m.def(
      "similarity",
      [](const RunConfig& c, const std::string& data, const std::string& out) {
        const auto r = similarity_stage(c, data, out);
        return py::make_tuple(r.matrix.ids, to_numpy(r.matrix.distance), r.mean_off_diagonal);
      },
      py::arg("config"), py::arg("data_dir") = "", py::arg("out_dir") = ".");
}
