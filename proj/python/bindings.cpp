#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ecog/epoching.hpp"
#include "ecog/experiment.hpp"
#include "ecog/synth.hpp"

namespace py = pybind11;
using namespace ecog;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict report_dict(const ConfusionReport& r) {
  py::dict d;
  d["n_classes"] = r.n_classes;
  d["counts"] = Eigen::MatrixXi(r.counts);
  d["da"] = r.da;
  d["per_class_da"] = Eigen::VectorXd(r.per_class_da);
  d["precision"] = Eigen::VectorXd(r.precision);
  d["sensitivity"] = Eigen::VectorXd(r.sensitivity);
  return d;
}

ExperimentConfig config_from(const py::object& overrides) {
  return overrides.is_none() ? ExperimentConfig{} : config_from_json(from_python(overrides));
}

}  // namespace

PYBIND11_MODULE(_ecogdec, m) {
  m.doc() = "Auditory ECoG decoding core";
  m.attr("__version__") = ECOG_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::enum_<FilterKind>(m, "FilterKind").value("Lowpass", FilterKind::Lowpass).value("Highpass", FilterKind::Highpass);

  py::class_<BiquadCascade>(m, "BiquadCascade")
      .def_readonly("fs_hz", &BiquadCascade::fs_hz)
      .def_property_readonly("n_sections", [](const BiquadCascade& c) { return c.sections.size(); })
      .def("is_stable", &BiquadCascade::is_stable)
      .def("magnitude_db", &BiquadCascade::magnitude_db, py::arg("freq_hz"))
      .def(
          "filter",
          [](const BiquadCascade& c, std::vector<double> x) {
            c.filter(x);
            return x;
          },
          py::arg("x"), "Causal filtering from zero initial state");

  m.def("design_butterworth", &design_butterworth, py::arg("kind"), py::arg("cutoff_hz"), py::arg("order"),
        py::arg("fs_hz"));
  m.def("design_bandpass", &design_bandpass, py::arg("low_hz"), py::arg("high_hz"), py::arg("order"),
        py::arg("fs_hz"));

  py::class_<Recording>(m, "Recording")
      .def_readonly("fs_hz", &Recording::fs_hz)
      .def_readonly("day_id", &Recording::day_id)
      .def_readonly("triggers", &Recording::triggers)
      .def_property_readonly("samples", [](const Recording& r) { return Signal(r.samples); })
      .def_property_readonly("condition", [](const Recording& r) { return to_string(r.condition); })
      .def_property_readonly("excluded_channels",
                             [](const Recording& r) {
                               std::vector<int> out;
                               for (std::size_t c = 0; c < r.channels.size(); ++c)
                                 if (r.channels[c].excluded) out.push_back(static_cast<int>(c));
                               return out;
                             })
      .def_property_readonly("n_channels", &Recording::n_channels)
      .def_property_readonly("n_samples", &Recording::n_samples);

  m.def(
      "generate_day",
      [](int day_id, std::uint64_t seed, int trials_per_day, double snr, double artifact_rate) {
        SynthConfig s;
        s.seed = seed;
        s.trials_per_day = trials_per_day;
        s.snr = snr;
        s.artifact_rate = artifact_rate;
        s.n_days = std::max(s.n_days, day_id);
        return generate_day(s, day_id);
      },
      py::arg("day_id"), py::arg("seed") = 42, py::arg("trials_per_day") = 261, py::arg("snr") = 1.0,
      py::arg("artifact_rate") = 0.02);
  m.def(
      "generate_dataset",
      [](const std::filesystem::path& out, int n_days, int trials_per_day, std::uint64_t seed) {
        SynthConfig s;
        s.n_days = n_days;
        s.trials_per_day = trials_per_day;
        s.seed = seed;
        generate_dataset(s, out);
      },
      py::arg("out"), py::arg("n_days") = 15, py::arg("trials_per_day") = 261, py::arg("seed") = 42);
  m.def("read_dataset", &read_dataset, py::arg("dir"));
  m.def("write_dataset", &write_dataset, py::arg("recording"), py::arg("dir"));

  m.def(
      "preprocess",
      [](const Recording& raw, bool decoding_path, const py::object& config) {
        return preprocess(raw, config_from(config).preprocess, decoding_path);
      },
      py::arg("recording"), py::arg("decoding_path") = true, py::arg("config") = py::none());

  m.def(
      "relative_spectral_power",
      [](const Recording& raw) {
        const SpectralConfig spec;
        const Recording clean = preprocess(raw, PreprocessConfig{}, false);
        std::vector<SpectralMap> maps;
        for (const auto& t : segment_trials(clean)) maps.push_back(stft_power(prewhiten(t, spec), clean.fs_hz, spec));
        const auto rel = relative_spectral_power(average_maps(maps), spec);
        py::dict d;
        d["values"] = rel.values;
        d["freq_axis_hz"] = rel.freq_axis_hz;
        d["time_axis_s"] = rel.time_axis_s;
        return d;
      },
      py::arg("recording"), "Trial-averaged relative power per channel ([freq][time])");

  m.def(
      "decode",
      [](const Recording& raw, const std::string& method, const py::object& config) {
        const auto o = decode_recording(raw, method, config_from(config));
        py::dict d = report_dict(o.report);
        d["method"] = o.method;
        d["predicted"] = o.predicted;
        return d;
      },
      py::arg("recording"), py::arg("method"), py::arg("config") = py::none(),
      "Decode one day; `config` is a dict of experiment overrides");

  m.def(
      "confusion_matrix",
      [](const std::vector<int>& actual, const std::vector<int>& predicted, int n_classes) {
        return report_dict(confusion_matrix(actual, predicted, n_classes));
      },
      py::arg("actual"), py::arg("predicted"), py::arg("n_classes"));

  m.def(
      "wilcoxon_ranksum",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = wilcoxon_ranksum(a, b);
        return py::make_tuple(r.u, r.p, r.exact);
      },
      py::arg("a"), py::arg("b"), "Returns (U, two-sided p, exact)");
  m.def("binomial_greater_p", &binomial_greater_p, py::arg("k"), py::arg("n"), py::arg("p0"));

  m.def(
      "run_experiment",
      [](const py::object& config) {
        ExperimentConfig cfg = config_from_json(from_python(config));
        py::gil_scoped_release release;
        return run_experiment(cfg);
      },
      py::arg("config"), "Full run from disk; returns the process exit status");
  m.def(
      "report",
      [](const std::filesystem::path& results) { return to_python(report_from_directory(results)); },
      py::arg("results"));
  m.def(
      "default_config", [] { return to_python(config_to_json(ExperimentConfig{})); },
      "Default experiment configuration as a dict");
}
