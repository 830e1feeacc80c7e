// SPDX-License-Identifier: Apache-2.0

#include "epr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace epr {

void SyntheticCorpusSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic corpus needs K >= 2");
  if (!class_names.empty() && static_cast<int>(class_names.size()) != n_classes)
    throw ConfigError("class_names must have K entries");
  if (utterances_per_class < 1) throw ConfigError("utterances_per_class must be at least 1");
  if (min_segments < 1 || max_segments < min_segments)
    throw ConfigError("infeasible segment range [" + std::to_string(min_segments) + ", " +
                      std::to_string(max_segments) + "]");
  if (!(off_class_mass >= 0.0 && off_class_mass < 0.5)) throw ConfigError("off_class_mass must lie in [0, 0.5)");
  if (!(noise_level >= 0.0)) throw ConfigError("noise_level must be nonnegative");
  if (!(template_contrast > 0.0)) throw ConfigError("template_contrast must be positive");
  if (!(label_flip_fraction >= 0.0 && label_flip_fraction <= 1.0))
    throw ConfigError("label_flip_fraction must lie in [0, 1]");
  if (n_speakers < 1) throw ConfigError("n_speakers must be at least 1");
  if (n_mels < 2) throw ConfigError("n_mels must be at least 2");
  segment.validate(frames);
}

std::vector<std::string> SyntheticCorpusSpec::resolved_class_names() const {
  if (!class_names.empty()) return class_names;
  std::vector<std::string> out;
  for (int k = 0; k < n_classes; ++k) out.push_back("emotion_" + std::to_string(k));
  return out;
}

MixtureMode parse_mixture_mode(const std::string& name) {
  if (name == "pure") return MixtureMode::kPure;
  if (name == "blended") return MixtureMode::kBlended;
  throw ConfigError("unknown mixture mode '" + name + "' (expected pure or blended)");
}

std::string mixture_mode_name(MixtureMode m) { return m == MixtureMode::kPure ? "pure" : "blended"; }

Dataset SyntheticCorpus::to_dataset() const {
  Dataset ds;
  ds.class_names = class_names;
  for (const auto& su : utterances) {
    Utterance u;
    u.id = su.spectrogram.utterance_id;
    u.label = su.label;
    u.speaker = su.speaker;
    u.segments = segment_spectrogram(su.spectrogram, spec.segment, spec.frames);
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  const int k = spec.n_classes;
  const int bins = spec.n_mels;
  SyntheticCorpus corpus;
  corpus.spec = spec;
  corpus.class_names = spec.resolved_class_names();

  // Class templates: a shared spectral tilt plus two class-specific Gaussian bumps.
  Rng trng(derive_seed(spec.seed, {0x7E3A}));
  corpus.templates.resize(bins, k);
  for (int c = 0; c < k; ++c) {
    const double c1 = trng.uniform(0.05, 0.95) * (bins - 1);
    const double c2 = trng.uniform(0.05, 0.95) * (bins - 1);
    const double w1 = trng.uniform(0.04, 0.1) * bins, w2 = trng.uniform(0.04, 0.1) * bins;
    const double a1 = spec.template_contrast * trng.uniform(2.0, 4.0);
    const double a2 = spec.template_contrast * trng.uniform(1.0, 3.0);
    for (int b = 0; b < bins; ++b) {
      const double tilt = -4.0 - 3.0 * b / static_cast<double>(bins);
      corpus.templates(b, c) = tilt + a1 * std::exp(-0.5 * std::pow((b - c1) / w1, 2)) +
                               a2 * std::exp(-0.5 * std::pow((b - c2) / w2, 2));
    }
  }

  // Speaker colorations, scaled with the noise level so a noiseless corpus is template-exact.
  Rng srng(derive_seed(spec.seed, {0x5EA7}));
  Matrix speaker_offset(bins, spec.n_speakers);
  for (int s = 0; s < spec.n_speakers; ++s) {
    const double freq = srng.uniform(0.5, 2.0), phase = srng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int b = 0; b < bins; ++b)
      speaker_offset(b, s) =
          0.5 * spec.noise_level * std::sin(2.0 * std::numbers::pi * freq * b / bins + phase);
  }

  const int seg_hop = spec.segment.hop_frames(spec.frames);
  const int n_utts = k * spec.utterances_per_class;
  for (int j = 0; j < n_utts; ++j) {
    const int cls = j % k;
    Rng rng(derive_seed(spec.seed, {0x0177, static_cast<std::uint64_t>(j)}));
    SyntheticUtterance su;
    su.label = su.true_label = cls;
    const int spk = j % spec.n_speakers;
    su.speaker = "spk" + std::to_string(spk);
    char id[64];
    std::snprintf(id, sizeof(id), "synth_%s_%04d", corpus.class_names[static_cast<std::size_t>(cls)].c_str(), j);
    su.spectrogram.utterance_id = id;

    const int n_seg = spec.min_segments + static_cast<int>(rng.index(static_cast<std::size_t>(spec.max_segments - spec.min_segments + 1)));
    const int n_frames = (n_seg - 1) * seg_hop + spec.segment.seg_frames;

    // Per-frame class weights, piecewise constant over short chunks.
    Matrix weights = Matrix::Zero(k, n_frames);
    for (int f = 0; f < n_frames;) {
      const int len = 4 + static_cast<int>(rng.index(13));
      double m = 0.0;
      int other = cls;
      if (spec.mixture_mode == MixtureMode::kBlended && spec.off_class_mass > 0.0) {
        m = rng.uniform(0.0, spec.off_class_mass);
        other = (cls + 1 + static_cast<int>(rng.index(static_cast<std::size_t>(k - 1)))) % k;
      }
      for (int g = f; g < std::min(n_frames, f + len); ++g) {
        weights(cls, g) = 1.0 - m;
        weights(other, g) += m;
      }
      f += len;
    }

    const double gain = spec.noise_level * rng.uniform(-0.5, 0.5);
    Matrix values = corpus.templates * weights;
    for (int f = 0; f < n_frames; ++f)
      for (int b = 0; b < bins; ++b) values(b, f) += speaker_offset(b, spk) + gain + spec.noise_level * rng.normal();
    su.spectrogram.values = std::move(values);
    su.spectrogram.frame_times.resize(static_cast<std::size_t>(n_frames));
    for (int f = 0; f < n_frames; ++f) su.spectrogram.frame_times[static_cast<std::size_t>(f)] = f * spec.frames.hop_ms;

    for (int i = 0; i < n_seg; ++i) {
      Vector mean = weights.middleCols(static_cast<Eigen::Index>(i) * seg_hop, spec.segment.seg_frames).rowwise().mean();
      mean /= mean.sum();
      su.segment_truth.emplace_back(std::vector<double>(mean.data(), mean.data() + mean.size()));
    }
    corpus.utterances.push_back(std::move(su));
  }

  // Observed-label noise.
  const auto n_flip = static_cast<std::size_t>(std::llround(spec.label_flip_fraction * n_utts));
  if (n_flip > 0) {
    Rng frng(derive_seed(spec.seed, {0xF11B}));
    std::vector<std::size_t> order(static_cast<std::size_t>(n_utts));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    frng.shuffle(order);
    for (std::size_t i = 0; i < n_flip; ++i) {
      auto& su = corpus.utterances[order[i]];
      su.label = (su.true_label + 1 + static_cast<int>(frng.index(static_cast<std::size_t>(k - 1)))) % k;
    }
  }
  return corpus;
}

}  // namespace epr
