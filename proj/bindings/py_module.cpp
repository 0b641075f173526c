// Python bindings over the core operations: encoding, relation mining,
// metrics, synthetic data, and the run pipeline.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ktrace/config.hpp"
#include "ktrace/data.hpp"
#include "ktrace/metrics.hpp"
#include "ktrace/pipeline.hpp"
#include "ktrace/relation.hpp"
#include "ktrace/tensor.hpp"

namespace py = pybind11;
using namespace ktrace;

namespace {

RunContext make_run(const std::string& subcommand, const std::string& config_path,
                    const std::vector<std::string>& overrides, const std::string& out) {
  return prepare_run(subcommand, config_path, overrides, out);
}

std::string run_subcommand(const std::string& subcommand, const std::string& config_path,
                           const std::vector<std::string>& overrides, const std::string& out) {
  RunContext run = make_run(subcommand, config_path, overrides, out);
  dispatch(run);
  return run.out_dir;
}

std::vector<double> softmax_values(const std::vector<double>& x) {
  Tape tape(false);
  Tensor t = Tensor::from_values({static_cast<int>(x.size())}, x);
  Tensor out = tape.softmax(t, 0);
  auto v = out.values();
  return {v.begin(), v.end()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "knowledge tracing toolkit core";

  m.def("encode_interaction", &encode_interaction, py::arg("exercise_id"), py::arg("response"),
        py::arg("exercise_count"));
  m.def("decode_interaction", &decode_interaction, py::arg("interaction_id"),
        py::arg("exercise_count"));

  m.def(
      "phi",
      [](std::int64_t n00, std::int64_t n01, std::int64_t n10, std::int64_t n11) {
        ContingencyTable t;
        t.n00 = n00;
        t.n01 = n01;
        t.n10 = n10;
        t.n11 = n11;
        return phi(t);
      },
      py::arg("n00"), py::arg("n01"), py::arg("n10"), py::arg("n11"));

  m.def(
      "forget_coefficients",
      [](const std::vector<std::int64_t>& past_ms, std::int64_t next_ms, double strength_hours) {
        return forget_coefficients(past_ms, next_ms, strength_hours);
      },
      py::arg("past_timestamps_ms"), py::arg("next_timestamp_ms"), py::arg("strength_hours"));

  m.def(
      "compute_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) -> py::object {
        auto a = compute_auc(scores, labels);
        return a ? py::cast(*a) : py::none();
      },
      py::arg("scores"), py::arg("labels"));
  m.def("compute_acc", &compute_acc, py::arg("scores"), py::arg("labels"));
  m.def("softmax", &softmax_values, py::arg("values"));

  m.def(
      "generate_synthetic_csv",
      [](const std::string& path, int students, int exercises, int skills, std::uint64_t seed) {
        SynthConfig cfg;
        cfg.students = students;
        cfg.exercises = exercises;
        cfg.skills = skills;
        cfg.seed = seed;
        write_log_csv(path, generate_synthetic(cfg));
      },
      py::arg("path"), py::arg("students") = 100, py::arg("exercises") = 25,
      py::arg("skills") = 5, py::arg("seed") = 7);

  m.def("run", &run_subcommand, py::arg("subcommand"), py::arg("config_path") = std::string(),
        py::arg("overrides") = std::vector<std::string>{}, py::arg("out") = std::string(),
        "Run a pipeline subcommand (synth, ingest, relations, train, evaluate, "
        "export-attention, compare); returns the run directory.");
}
