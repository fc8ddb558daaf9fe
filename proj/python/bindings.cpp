#include "uqasr/config.hpp"
#include "uqasr/detector.hpp"
#include "uqasr/pgd.hpp"
#include "uqasr/pipeline.hpp"
#include "uqasr/synth.hpp"
#include "uqasr/uncertainty.hpp"
#include "uqasr/viterbi.hpp"
#include "uqasr/wav.hpp"
#include "uqasr/word_accuracy.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace uqasr;

namespace {

Waveform as_waveform(const std::vector<double>& samples) {
  Waveform w;
  w.samples = samples;
  return w;
}

// A loaded model plus the decoding state needed to use it.
struct PyRecognizer {
  TrainedRecognizer trained;
  uint64_t predict_seed = 0;

  Recognizer view() const { return trained.recognizer(predict_seed); }
};

py::dict scores_to_dict(const UncertaintyScores& s) {
  py::dict d;
  d["entropy"] = s.entropy;
  d["mutual_information"] = s.mutual_information;
  d["variance"] = s.variance;
  d["akld"] = s.akld;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hybrid HMM-DNN digit recognizer with adversarial attacks and uncertainty-based detection";

  auto base = py::register_exception<Error>(m, "UqasrError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ArtifactError>(m, "ArtifactError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  auto parse = py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<WavError>(m, "WavError", parse.ptr());

  // Audio and features
  m.def("load_wav", [](const std::filesystem::path& p) { return load_wav(p).samples; }, py::arg("path"),
        "Samples of an 8 kHz mono 16-bit WAV file as floats in [-1, 1).");
  m.def(
      "save_wav",
      [](const std::vector<double>& samples, const std::filesystem::path& p) { save_wav(as_waveform(samples), p); },
      py::arg("samples"), py::arg("path"));
  m.def(
      "synth_utterance",
      [](const std::vector<int>& digits, uint64_t seed) {
        const SynthUtterance u = concat_utterance(digits, seed);
        return py::make_tuple(u.audio.samples, u.transcript);
      },
      py::arg("digits"), py::arg("seed"), "Synthetic utterance: (samples, transcript).");
  m.def("mfcc", [](const std::vector<double>& samples) { return compute_mfcc(as_waveform(samples)); },
        py::arg("samples"), "frames x 39 MFCC + delta + delta-delta features.");

  // Decoding
  m.def(
      "viterbi_decode",
      [](const Matrix& posteriors, double self_loop) {
        const DecodeResult r = viterbi_decode(posteriors, HmmTopology::standard(self_loop), nullptr);
        return py::make_tuple(r.transcript, r.alignment, r.score);
      },
      py::arg("posteriors"), py::arg("self_loop") = 0.6,
      "Decode frames x 95 posteriors with the digit-loop grammar: (transcript, alignment, score).");
  m.def(
      "forced_align",
      [](const Matrix& posteriors, const Transcript& transcript, double self_loop) {
        const ForcedAlignment r = forced_align(posteriors, HmmTopology::standard(self_loop), transcript);
        return py::make_tuple(r.alignment, r.score);
      },
      py::arg("posteriors"), py::arg("transcript"), py::arg("self_loop") = 0.6);
  m.def("word_accuracy", &word_accuracy, py::arg("reference"), py::arg("hypothesis"));

  // Uncertainty and detection
  m.def("frame_entropy", [](const RowVector& p) { return frame_entropy(p); }, py::arg("p"));
  m.def("frame_mutual_information", &frame_mutual_information, py::arg("samples"));
  m.def("frame_variance", &frame_variance, py::arg("samples"));
  m.def("frame_akld", &frame_akld, py::arg("samples"));
  m.def(
      "scores_from_samples",
      [](const std::vector<Matrix>& samples, const std::string& aggregation) {
        return scores_to_dict(scores_from_samples(samples, parse_aggregation(aggregation)));
      },
      py::arg("samples"), py::arg("aggregation") = "max");
  m.def(
      "roc_auroc",
      [](const std::vector<double>& benign, const std::vector<double>& adversarial) {
        const RocResult r = roc_auroc(benign, adversarial);
        std::vector<std::tuple<double, double, double>> points;
        for (const auto& p : r.points) points.emplace_back(p.threshold, p.fpr, p.tpr);
        return py::make_tuple(r.auroc, points);
      },
      py::arg("benign_scores"), py::arg("adversarial_scores"),
      "(auroc, [(threshold, fpr, tpr), ...]) with adversarial as the positive class.");

  py::class_<PyRecognizer>(m, "Recognizer")
      .def_property_readonly("kind", [](const PyRecognizer& r) { return std::string(to_string(r.trained.model.kind())); })
      .def("posteriors", [](const PyRecognizer& r, const std::vector<double>& s) { return r.view().posteriors(as_waveform(s)); },
           py::arg("samples"))
      .def(
          "decode",
          [](const PyRecognizer& r, const std::vector<double>& s) { return r.view().decode(as_waveform(s)).transcript; },
          py::arg("samples"))
      .def(
          "measure",
          [](const PyRecognizer& r, const std::vector<double>& s, int samples, uint64_t seed) {
            return scores_to_dict(measure_utterance(r.trained.model, compute_mfcc(as_waveform(s)), samples, seed));
          },
          py::arg("samples"), py::arg("num_samples") = 0, py::arg("seed") = 0)
      .def(
          "attack",
          [](const PyRecognizer& r, const std::vector<double>& s, const Transcript& target, double epsilon,
             int iterations, uint64_t seed, const std::string& mode) {
            const Waveform w = as_waveform(s);
            const Recognizer rec = r.view();
            AttackConfig cfg;
            cfg.epsilon = epsilon;
            cfg.iterations = iterations;
            cfg.seed = seed;
            cfg.gradient_mode = parse_gradient_mode(mode);
            AdversarialExample adv = pgd_attack(w, target, build_attack_target(w, target, rec), r.trained.model, cfg);
            snap_delta_to_pcm16(adv);
            return adv.perturbed().samples;
          },
          py::arg("samples"), py::arg("target"), py::arg("epsilon"), py::arg("iterations") = 100,
          py::arg("seed") = 0, py::arg("gradient_mode") = "single_sample",
          "Targeted PGD; returns the perturbed samples snapped to the 16-bit grid.");

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::filesystem::path& config, bool force, bool verbose) {
             PipelineOptions opts;
             opts.force = force;
             if (verbose) {
               opts.log = [](const std::string& msg) {
                 py::gil_scoped_acquire gil;
                 py::print(msg);
               };
             }
             return Pipeline(load_config(config), opts);
           }),
           py::arg("config"), py::arg("force") = false, py::arg("verbose") = false)
      .def_property_readonly("output_dir", [](const Pipeline& p) { return p.config().output_dir; })
      .def("synth_data", &Pipeline::synth_data, py::call_guard<py::gil_scoped_release>())
      .def("train", [](Pipeline& p, const std::string& k) { p.train(parse_model_kind(k)); }, py::arg("model"),
           py::call_guard<py::gil_scoped_release>())
      .def("align", [](Pipeline& p, const std::string& k) { p.align(parse_model_kind(k)); }, py::arg("model"),
           py::call_guard<py::gil_scoped_release>())
      .def("evaluate", [](Pipeline& p, const std::string& k) { p.evaluate(parse_model_kind(k)); }, py::arg("model"),
           py::call_guard<py::gil_scoped_release>())
      .def("attack", [](Pipeline& p, const std::string& k) { p.attack(parse_model_kind(k)); }, py::arg("model"),
           py::call_guard<py::gil_scoped_release>())
      .def("measure", [](Pipeline& p, const std::string& k) { p.measure(parse_model_kind(k)); }, py::arg("model"),
           py::call_guard<py::gil_scoped_release>())
      .def("detect", [](Pipeline& p, const std::string& k) { p.detect(parse_model_kind(k)); }, py::arg("model"),
           py::call_guard<py::gil_scoped_release>())
      .def("report", &Pipeline::report, py::call_guard<py::gil_scoped_release>())
      .def("run_all", &Pipeline::run_all, py::call_guard<py::gil_scoped_release>())
      .def(
          "recognizer",
          [](const Pipeline& p, const std::string& k, uint64_t seed) {
            return PyRecognizer{p.load_recognizer(parse_model_kind(k)), seed};
          },
          py::arg("model"), py::arg("predict_seed") = 0);
}
