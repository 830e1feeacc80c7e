// SPDX-License-Identifier: Apache-2.0
//
// Python bindings: feature extraction, label rules, metrics and the pipeline.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "epr/pipeline.hpp"

namespace py = pybind11;
using namespace epr;

namespace {

EmotionDistribution dist(const std::vector<double>& p) { return EmotionDistribution(p); }

py::dict generation_dict(const GenerationReport& g) {
  py::dict d;
  d["generation"] = g.t;
  d["wa"] = g.wa;
  d["ua"] = g.ua;
  d["mean_ep_entropy"] = g.mean_ep_entropy;
  d["mean_target_entropy"] = g.mean_target_entropy;
  d["min_target_label_mass"] = g.min_target_label_mass;
  d["confusion_matrix"] = g.confusion.rows();
  d["resumed"] = g.resumed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_epr, m) {
  m.doc() = "Emotion profile refinery: segment-level speech emotion classification with iterative soft labels";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "log_mel_spectrogram",
      [](const std::vector<double>& samples, int sample_rate, int win_ms, int hop_ms, int fft_len, int n_mels) {
        AudioClip clip;
        clip.samples = samples;
        clip.sample_rate = sample_rate;
        return log_mel_spectrogram(clip, FrameSpec{win_ms, hop_ms, fft_len, n_mels}).values;
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("win_ms") = 25, py::arg("hop_ms") = 10,
      py::arg("fft_len") = 512, py::arg("n_mels") = 64, "Log-Mel energies, n_mels x frames.");
  m.def(
      "segment_duration_ms",
      [](int seg_frames, int win_ms, int hop_ms) {
        FrameSpec f;
        f.win_ms = win_ms;
        f.hop_ms = hop_ms;
        SegmentSpec s;
        s.seg_frames = seg_frames;
        return segment_duration_ms(s, f);
      },
      py::arg("seg_frames") = 32, py::arg("win_ms") = 25, py::arg("hop_ms") = 10);

  m.def("entropy", [](const std::vector<double>& p) { return entropy(dist(p)); }, py::arg("p"));
  m.def(
      "cross_entropy", [](const std::vector<double>& pred, const std::vector<double>& target) {
        return cross_entropy(dist(pred), dist(target));
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "kl_divergence", [](const std::vector<double>& pred, const std::vector<double>& target) {
        return kl_divergence(dist(pred), dist(target));
      },
      py::arg("pred"), py::arg("target"));
  m.def(
      "combine_with_hard", [](const std::vector<double>& pred, const std::vector<double>& hard) {
        return combine_with_hard(dist(pred), dist(hard)).probs();
      },
      py::arg("pred"), py::arg("hard"), "pEPR target: (pred + hard) / 2.");

  m.def(
      "weighted_accuracy",
      [](const std::vector<std::vector<long>>& rows) { return weighted_accuracy(ConfusionMatrix::from_rows(rows)); },
      py::arg("confusion"));
  m.def(
      "unweighted_accuracy",
      [](const std::vector<std::vector<long>>& rows) { return unweighted_accuracy(ConfusionMatrix::from_rows(rows)); },
      py::arg("confusion"));

  m.def(
      "generate_corpus",
      [](const std::string& spec_json, const std::string& out_dir) {
        const auto corpus = generate_synthetic_corpus(corpus_spec_from_json(spec_json));
        write_corpus(corpus, out_dir);
        return corpus.utterances.size();
      },
      py::arg("spec_json"), py::arg("out_dir"), "Writes a synthetic feature store; returns the utterance count.");
  m.def(
      "resolve_config", [](const std::string& config_json) { return config_to_json(config_from_json(config_json)); },
      py::arg("config_json"), "Config JSON with every default filled in.");
  m.def(
      "run",
      [](const std::string& config_json, bool resume, bool save_models) {
        RunReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(config_from_json(config_json), RunOptions{resume, save_models});
        }
        py::list gens;
        for (const auto& g : report.generations) gens.append(generation_dict(g));
        return gens;
      },
      py::arg("config_json"), py::arg("resume") = true, py::arg("save_models") = true,
      "Runs the pipeline; returns one report dict per generation.");
  m.def(
      "evaluate", [](const std::string& run_dir, int generation) {
        return generation_dict(evaluate_run(run_dir, generation));
      },
      py::arg("run_dir"), py::arg("generation") = 0);
  m.def("export_ep", &export_ep_evolution, py::arg("run_dir"), py::arg("utterance_id"),
        "CSV of one utterance's emotion profiles across generations.");
  m.def("audit_run", &audit_run, py::arg("run_dir"), "Fold-purity violations; empty when clean.");
}
