#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "awkd/composition.hpp"
#include "awkd/operators.hpp"
#include "awkd/runner.hpp"

namespace py = pybind11;
using namespace awkd;

namespace {

WeightBounds bounds(double w_min, double w_max, double lipschitz) { return {w_min, w_max, lipschitz}; }

py::dict summary(const RunRecord& r) {
  py::list assertions;
  for (const auto& a : r.assertions) {
    py::dict d;
    d["name"] = a.name;
    d["expected"] = a.expected;
    d["measured"] = a.measured;
    d["tol"] = a.tol;
    d["pass"] = a.pass;
    assertions.append(d);
  }
  py::dict out;
  out["config_hash"] = r.config_hash;
  out["kind"] = r.kind;
  out["assertions"] = assertions;
  return out;
}

ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) { return parse_config(path, seed); }

}  // namespace

PYBIND11_MODULE(_awkd, m) {
  m.doc() = "Adaptive weighted knowledge distillation";
  m.attr("__version__") = std::string(kVersion);

  static py::handle error = py::exception<Error>(m, "AwkdError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("p"));
  m.def("cross_entropy", [](const std::vector<double>& q, const std::vector<double>& p) { return cross_entropy(q, p); },
        py::arg("q"), py::arg("p"));
  m.def("kl_divergence", [](const std::vector<double>& q, const std::vector<double>& p) { return kl_divergence(q, p); },
        py::arg("q"), py::arg("p"));

  m.def(
      "clip_normalize",
      [](const std::vector<double>& raw, double w_min, double w_max, double lipschitz) {
        return clip_normalize(raw, bounds(w_min, w_max, lipschitz));
      },
      py::arg("raw"), py::arg("w_min") = 0.05, py::arg("w_max") = 0.95, py::arg("lipschitz") = 10.0);
  m.def(
      "inverse_entropy_weights",
      [](const std::vector<double>& h, double w_min, double w_max, double lipschitz) {
        return inverse_entropy_weights(h, bounds(w_min, w_max, lipschitz));
      },
      py::arg("entropies"), py::arg("w_min") = 0.05, py::arg("w_max") = 0.95, py::arg("lipschitz") = 10.0);
  m.def(
      "unified_weight",
      [](const std::vector<double>& token, const std::vector<double>& task, const std::vector<double>& context) {
        return unified_weight(token, task, context);
      },
      py::arg("token"), py::arg("task"), py::arg("context"));
  m.def(
      "weighted_ensemble",
      [](const std::vector<double>& weights, const std::vector<std::vector<double>>& dists) {
        std::vector<TokenDistribution> d;
        for (const auto& p : dists) d.push_back(validate_distribution(p));
        const auto q = weighted_ensemble(weights, d);
        return std::vector<double>(q.probs().begin(), q.probs().end());
      },
      py::arg("weights"), py::arg("dists"));

  m.def("list_kinds", [] {
    std::vector<std::string> out;
    for (auto k : all_kinds()) out.emplace_back(to_string(k));
    return out;
  });
  m.def(
      "validate",
      [](const std::string& path, std::optional<std::uint64_t> seed) {
        const auto cfg = load(path, seed);
        py::dict d;
        d["kind"] = std::string(to_string(cfg.kind));
        d["config_hash"] = cfg.hash;
        return d;
      },
      py::arg("path"), py::arg("seed") = py::none());
  m.def(
      "run",
      [](const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
        const auto cfg = load(path, seed);
        RunRecord rec;
        {
          py::gil_scoped_release release;
          rec = run_experiment(cfg);
        }
        if (out) {
          std::ostringstream sink;
          emit_summary(rec, *out, sink, true);
        }
        return summary(rec);
      },
      py::arg("path"), py::arg("seed") = py::none(), py::arg("out") = py::none());
}
