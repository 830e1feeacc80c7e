// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the end-to-end pipeline: corpus generation,
// featurization, refinery runs with per-generation checkpoints, utterance
// decisions and exports.

#ifndef EPR_PIPELINE_HPP_
#define EPR_PIPELINE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "epr/datagen.hpp"
#include "epr/eval.hpp"
#include "epr/forest.hpp"
#include "epr/io.hpp"
#include "epr/refinery.hpp"
#include "epr/representation.hpp"

namespace epr {

inline constexpr int kConfigSchemaVersion = 1;

struct EvalConfig {
  int folds = 10;
  FoldGrouping grouping = FoldGrouping::kUtterance;
};

/// Everything a run depends on. Component seeds are derived from the master
/// seed, so overriding it reseeds the whole pipeline.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  FrameSpec frames;
  SegmentSpec segment;
  TrainConfig train;  // its seed field is ignored; fold models are seeded by the refinery
  int generations = 3;
  RefineryMode mode = RefineryMode::kPseudoOneHot;
  int refinery_folds = 10;
  FoldGrouping refinery_grouping = FoldGrouping::kUtterance;
  std::vector<Statistic> statistics = default_statistics();
  ForestConfig forest;  // its seed field is ignored; derived from the master seed
  EvalConfig eval;
  std::string feature_store;
  std::string output_dir = "epr-run";

  void validate() const;
  RefineryConfig refinery_config() const;
  ForestConfig forest_config() const;
  std::uint64_t eval_seed() const;
};

/// Versioned JSON. Missing keys keep their defaults; unknown keys, wrong types
/// and unsupported schema versions are ConfigErrors.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
/// Relative feature_store/output_dir paths resolve against the file's directory.
ExperimentConfig load_config(const std::string& path);

SyntheticCorpusSpec corpus_spec_from_json(const std::string& text);
std::string corpus_spec_to_json(const SyntheticCorpusSpec& spec);

// --- Corpus generation and featurization --------------------------------------

/// Writes a synthetic corpus as a feature store: manifest.csv, classes.txt,
/// store.json, features/<id>.csv, segments.csv, ground_truth.csv (per-segment
/// planted mixtures) and corpus.json (spec and class templates).
void write_corpus(const SyntheticCorpus& corpus, const std::string& dir);

struct FeaturizeReport {
  int succeeded = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // utterance id, message
};

/// Computes log-Mel spectrograms for every manifest entry and writes a feature
/// store. A failing utterance is reported and skipped; the rest continue.
FeaturizeReport featurize(const CorpusManifest& manifest, const FrameSpec& frames, const SegmentSpec& segment,
                          const std::string& out_dir);

// --- Utterance decisions ---------------------------------------------------------

struct CrossValidation {
  ConfusionMatrix confusion;
  std::vector<int> predictions;  // parallel to the input rows
  FoldPlan plan;
};

/// k-fold cross-validation of the random forest. Forests train on
/// train_labels; predictions are scored against eval_labels (identical unless
/// the observed labels are known to be noisy).
CrossValidation cross_validate_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& train_labels,
                                      const std::vector<int>& eval_labels, const std::vector<FoldItem>& items,
                                      int n_classes, const ForestConfig& forest, int folds, std::uint64_t seed,
                                      FoldGrouping grouping = FoldGrouping::kUtterance);

/// Representation of every dataset utterance, in dataset order.
std::vector<UtteranceRepresentation> dataset_representations(const Dataset& ds, const EpMap& eps,
                                                             const std::vector<Statistic>& stats);

// --- Runs -----------------------------------------------------------------------

struct GenerationReport {
  int t = 0;
  double mean_ep_entropy = 0.0;
  double mean_target_entropy = 0.0;
  double min_target_label_mass = 0.0;
  double wa = 0.0;
  double ua = 0.0;
  ConfusionMatrix confusion;
  bool resumed = false;
};

struct RunReport {
  std::vector<std::string> class_names;
  std::size_t n_utterances = 0;
  std::size_t n_segments = 0;
  std::vector<GenerationReport> generations;
};

struct RunOptions {
  bool resume = true;       // reuse completed generation directories
  bool save_models = true;  // keep fold-out model checkpoints
};

/// Runs the refinery on the configured feature store and writes, per
/// generation, gen_XX/{eps,targets,representation,predictions,confusion}.csv,
/// audit.json and models/; then metrics.json, forest.json (trained on every
/// utterance's final representation), config.json and run_manifest.json.
/// Each generation directory appears atomically once complete.
RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Metrics JSON as written to metrics.json (no timings, so runs are comparable byte for byte).
std::string metrics_json(const RunReport& report, const ExperimentConfig& cfg);

/// Re-scores a stored generation's representation CSV with the run's config.
GenerationReport evaluate_run(const std::string& run_dir, int generation = 0);

/// All generations' EP columns of one utterance: T*N rows of
/// utterance_id,segment_index,generation,p_1..p_K.
std::string export_ep_evolution(const std::string& run_dir, const std::string& utterance_id);

/// Fold-purity audit over a run's stored audit.json files; one message per violation.
std::vector<std::string> audit_run(const std::string& run_dir);

std::string generation_dir_name(int t);

}  // namespace epr

#endif  // EPR_PIPELINE_HPP_
