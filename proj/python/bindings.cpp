// Python bindings. Configs cross the boundary as JSON text; the Python
// package converts dicts on its side.

#include <optional>

#include <nlohmann/json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "blinklight/acceptance.hpp"
#include "blinklight/pipeline.hpp"

namespace py = pybind11;
namespace bl = blinklight;
namespace bp = blinklight::pipeline;

namespace {

bp::PipelineConfig parse_config(const std::string& text) {
  auto config = bp::config_from_json(nlohmann::json::parse(text.empty() ? "{}" : text));
  config.validate();
  return config;
}

py::dict stage_result(const bp::StageResult& r) {
  py::dict d;
  d["stage"] = r.stage;
  d["dir"] = r.dir;
  d["summary"] = r.summary;
  d["manifest"] = bp::manifest_to_json(r.manifest).dump();
  return d;
}

py::dict criterion(const bl::acceptance::CriterionResult& r) {
  py::dict d;
  d["id"] = r.id;
  d["name"] = r.name;
  d["passed"] = r.passed;
  d["detail"] = r.detail;
  d["seconds"] = r.seconds;
  return d;
}

bl::train::PredictedSeries series(std::vector<double> values, std::size_t first_valid_frame, double fps) {
  bl::train::PredictedSeries s;
  s.values = std::move(values);
  s.first_valid_frame = first_valid_frame;
  s.fps = fps;
  return s;
}

bl::pose::RowMatrix as_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array (frames x channels)");
  bl::pose::RowMatrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Blink-suppression highlight detection from skater pose";

  // Translators run newest first, so the base class goes in before its subclasses.
  auto base = py::register_exception<bl::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<bl::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<bl::ProvenanceError>(m, "ProvenanceError", base.ptr());
  py::register_exception<bp::MissingStageError>(m, "MissingStageError", base.ptr());

  m.attr("__version__") = std::string(bp::tool_version());

  m.def("default_config", [] { return bp::config_to_json(bp::PipelineConfig{}).dump(); },
        "Default pipeline configuration as JSON text.");
  m.def("normalize_config", [](const std::string& text) { return bp::config_to_json(parse_config(text)).dump(); },
        py::arg("config_json"), "Fills defaults and validates; returns the full configuration as JSON text.");
  m.def("stage_plan", [](const std::string& command, const std::string& text) {
    return bp::stage_plan(command, parse_config(text));
  });
  m.def(
      "run_stage",
      [](const std::string& stage, const std::string& text) {
        const auto config = parse_config(text);
        bp::StageResult r;
        {
          py::gil_scoped_release release;
          r = bp::run_stage(stage, config);
        }
        return stage_result(r);
      },
      py::arg("stage"), py::arg("config_json") = "");
  m.def(
      "reproduce",
      [](const std::string& text, std::size_t verify_threads) {
        bl::acceptance::ReproduceOptions opts;
        opts.verify_threads = verify_threads;
        const auto config = parse_config(text);
        bl::acceptance::AcceptanceReport report;
        {
          py::gil_scoped_release release;
          report = bl::acceptance::reproduce(config, opts);
        }
        py::list out;
        for (const auto& r : report.results) out.append(criterion(r));
        return out;
      },
      py::arg("config_json") = "", py::arg("verify_threads") = 0);

  m.def(
      "read_prediction",
      [](const std::string& text, const std::string& clip_id) {
        const auto s = bp::read_prediction(parse_config(text), clip_id);
        return py::make_tuple(s.first_valid_frame, py::array_t<double>(s.values.size(), s.values.data()));
      },
      py::arg("config_json"), py::arg("clip_id"), "(first_valid_frame, values) of a predict-stage series.");
  m.def("clip_ids", [](const std::string& text) { return bp::clip_ids(parse_config(text)); });

  m.def("pearson", [](std::vector<double> x, std::vector<double> y) { return bl::stats::pearson(x, y); });
  m.def(
      "surrogate_test",
      [](std::vector<double> pred, std::vector<double> actual, std::size_t n_shuffles, std::uint64_t seed,
         double alpha, std::size_t n_comparisons) {
        const auto r = bl::stats::surrogate_test(pred, actual, {n_shuffles, seed, alpha, n_comparisons});
        py::dict d;
        d["r"] = r.r;
        d["null_mean"] = r.null_mean;
        d["null_sd"] = r.null_sd;
        d["z"] = r.z;
        d["p"] = r.p;
        d["alpha_corrected"] = r.alpha_corrected;
        d["significant"] = r.significant;
        return d;
      },
      py::arg("pred"), py::arg("actual"), py::arg("n_shuffles") = 1000, py::arg("seed") = 0,
      py::arg("alpha") = 0.05, py::arg("n_comparisons") = 1);

  m.def(
      "detect_blinks",
      [](std::vector<std::optional<double>> samples, double sample_rate, double deriv_z_threshold,
         double pair_window) {
        bl::blink::PupilTrace trace{"p", "c", sample_rate, std::move(samples)};
        const auto events = bl::blink::detect_blinks(trace, {deriv_z_threshold, pair_window});
        std::vector<std::pair<double, double>> out;
        for (const auto& e : events) out.emplace_back(e.onset_time, e.offset_time);
        return out;
      },
      py::arg("samples"), py::arg("sample_rate") = 120.0, py::arg("deriv_z_threshold") = 2.5,
      py::arg("pair_window") = 0.5, "Blink (onset, offset) times in seconds; None marks an invalid sample.");

  m.def(
      "detect_highlights",
      [](std::vector<double> values, std::size_t first_valid_frame, double fps, double k, std::size_t min_run,
         const std::string& mode) {
        bl::highlight::DetectParams p{k, min_run, bl::highlight::RunMode::AllFrames};
        if (mode == "window_mean") {
          p.mode = bl::highlight::RunMode::WindowMean;
        } else if (mode != "all_frames") {
          throw bl::ConfigError("mode must be 'all_frames' or 'window_mean'");
        }
        const auto segs = bl::highlight::detect(series(std::move(values), first_valid_frame, fps), p);
        py::list out;
        for (const auto& s : segs) {
          py::dict d;
          d["start_frame"] = s.start_frame;
          d["end_frame"] = s.end_frame;
          d["min_value"] = s.min_value;
          d["depth_sd"] = s.depth_sd;
          out.append(d);
        }
        return out;
      },
      py::arg("values"), py::arg("first_valid_frame") = 0, py::arg("fps") = 30.0, py::arg("k") = 2.0,
      py::arg("min_run") = 5, py::arg("mode") = "all_frames");

  m.def(
      "ingest_clip",
      [](const std::filesystem::path& clip_dir, double threshold) {
        const auto joints = bl::pose::ingest(bl::pose::read_clip(clip_dir), threshold);
        return joints.values;
      },
      py::arg("clip_dir"), py::arg("confidence_threshold") = bl::pose::kDefaultConfidenceThreshold,
      "Normalized (frames x 36) joint matrix of a keypoint clip directory.");

  m.def(
      "predict",
      [](const std::filesystem::path& checkpoint,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& joints) {
        const auto params = bl::cnn::load_params(checkpoint);
        bl::pose::JointMatrix jm;
        jm.values = as_matrix(joints);
        const auto s = bl::train::predict_clip(params, jm);
        return py::make_tuple(s.first_valid_frame, py::array_t<double>(s.values.size(), s.values.data()));
      },
      py::arg("checkpoint"), py::arg("joints"), "(first_valid_frame, values) from a fold checkpoint.");
}
