// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpora with planted segment-level emotion mixtures. Spectrograms
// are synthesized directly in log-Mel space: each frame mixes per-class
// band-energy templates by its ground-truth class weights, plus Gaussian noise.

#ifndef EPR_DATAGEN_HPP_
#define EPR_DATAGEN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "epr/features.hpp"
#include "epr/refinery.hpp"

namespace epr {

enum class MixtureMode { kPure, kBlended };

struct SyntheticCorpusSpec {
  int n_classes = 4;
  std::vector<std::string> class_names;  // defaults to emotion_0..emotion_{K-1}
  int utterances_per_class = 25;
  int min_segments = 10;
  int max_segments = 20;
  MixtureMode mixture_mode = MixtureMode::kBlended;
  double off_class_mass = 0.3;     // upper bound of per-frame mass away from the utterance class
  double noise_level = 1.0;        // std of additive Gaussian noise in log-energy units
  double template_contrast = 1.0;  // scale of the class-specific band bumps
  double label_flip_fraction = 0.0;  // fraction of utterances whose observed label is replaced
  int n_speakers = 4;
  int n_mels = 64;
  SegmentSpec segment{32, 30};
  FrameSpec frames{};
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<std::string> resolved_class_names() const;
};

struct SyntheticUtterance {
  LogMelSpectrogram spectrogram;
  int label = 0;       // observed label (after any flip)
  int true_label = 0;  // class the utterance was generated from
  std::string speaker;
  std::vector<EmotionDistribution> segment_truth;  // ground-truth mixture per segment
};

struct SyntheticCorpus {
  SyntheticCorpusSpec spec;
  std::vector<std::string> class_names;
  Matrix templates;  // n_mels x K log-energy band profiles
  std::vector<SyntheticUtterance> utterances;

  /// Segments every spectrogram into a Dataset using the observed labels.
  Dataset to_dataset() const;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

MixtureMode parse_mixture_mode(const std::string& name);
std::string mixture_mode_name(MixtureMode m);

}  // namespace epr

#endif  // EPR_DATAGEN_HPP_
