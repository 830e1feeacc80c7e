// SPDX-License-Identifier: Apache-2.0
//
// Emotion profiles and the iterative profile refinery: fold-out EP
// generation, target refinement rules (sEPR, pEPR and the two ablations) and
// the generation loop that trains C_1, C_2, ... in sequence.

#ifndef EPR_REFINERY_HPP_
#define EPR_REFINERY_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epr/distribution.hpp"
#include "epr/eval.hpp"
#include "epr/features.hpp"
#include "epr/trainer.hpp"

namespace epr {

struct Utterance {
  std::string id;
  int label = 0;  // index into Dataset::class_names
  std::string speaker;
  std::vector<Segment> segments;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Utterance> utterances;

  int n_classes() const { return static_cast<int>(class_names.size()); }
  std::size_t n_segments() const;
  /// Throws DataError on duplicate ids, bad labels, empty utterances or
  /// segment indices that are not 0..N-1 in order.
  void validate() const;
  std::vector<FoldItem> fold_items() const;
};

/// K x N matrix; column i is the distribution predicted for segment i.
struct EmotionProfile {
  Matrix values;
  std::string utterance_id;
  int generation = 1;

  int n_classes() const { return static_cast<int>(values.rows()); }
  int n_segments() const { return static_cast<int>(values.cols()); }
  EmotionDistribution column(int i) const;
};

using EpMap = std::map<std::string, EmotionProfile>;

enum class RefineryMode { kNone, kStandard, kPseudoOneHot, kHardDynamic, kSoftStatic };

/// Accepts none, sEPR, pEPR, hard-dynamic, soft-static.
RefineryMode parse_mode(const std::string& name);
std::string mode_name(RefineryMode mode);

/// Segment targets used to train one generation's networks.
struct RefineryGeneration {
  int t = 1;
  RefineryMode mode = RefineryMode::kNone;
  std::map<std::string, std::vector<EmotionDistribution>> targets;  // utterance id -> per-segment target

  const EmotionDistribution& target(const std::string& utterance_id, int segment_index) const;
  /// Every segment of every utterance has exactly one valid target.
  void validate(const Dataset& ds) const;
};

struct RefineryConfig {
  int generations = 1;
  RefineryMode mode = RefineryMode::kPseudoOneHot;
  int folds = 10;
  FoldGrouping grouping = FoldGrouping::kUtterance;
  std::uint64_t seed = 0;
  TrainConfig train;

  void validate() const;
};

// --- Label rules --------------------------------------------------------------

/// N copies of the utterance's one-hot label.
std::vector<EmotionDistribution> initial_labels(int utterance_label, int n_segments, int n_classes);
EmotionProfile build_ep(const std::vector<EmotionDistribution>& predictions, const std::string& utterance_id = "",
                        int generation = 1);
/// sEPR: the fold-out prediction is the next target as is.
EmotionDistribution refine_standard(const EmotionDistribution& pred);
/// pEPR: (pred + hard) / 2. Throws ConfigError if hard is not one-hot.
EmotionDistribution combine_with_hard(const EmotionDistribution& pred, const EmotionDistribution& hard);
/// One-hot at the argmax; ties go to the lowest class index.
EmotionDistribution hard_dynamic_label(const EmotionDistribution& pred);
/// Element-wise mean of an utterance's segment predictions.
EmotionDistribution soft_static_label(const std::vector<EmotionDistribution>& preds);

/// Mean Shannon entropy (nats) over all EP columns.
double mean_ep_entropy(const EpMap& eps);

// --- Generation loop ----------------------------------------------------------

/// Bookkeeping for one fold-out model.
struct FoldAudit {
  int generation = 0;
  int fold = 0;
  std::uint64_t model_seed = 0;
  std::vector<std::string> training_utterances;  // ids of every segment the model saw
  std::vector<std::string> predicted_utterances; // ids whose EPs this model produced
};

struct GenerationStats {
  int t = 0;
  double mean_entropy = 0.0;
  double min_target_label_mass = 0.0;  // min over targets of mass on the utterance label
  double mean_target_entropy = 0.0;
  int models_trained = 0;
  bool resumed = false;
};

struct RefineryHooks {
  /// Returns previously completed EPs for generation t (resume), if any.
  std::function<std::optional<EpMap>(int t)> load_generation;
  std::function<void(int t, const EpMap&, const RefineryGeneration&)> on_generation;
  std::function<void(int t, int fold, const Model&)> on_model;
  std::function<void(const FoldAudit&)> on_fold;
};

struct RefineryResult {
  std::vector<EpMap> eps;     // one map per generation, in order
  std::vector<RefineryGeneration> targets;  // targets used to train each generation
  std::vector<GenerationStats> stats;
  std::vector<FoldAudit> audits;
  FoldPlan plan;

  const RefineryGeneration& final_generation() const { return targets.back(); }
};

/// Targets for generation 1: pseudo one-hot labels.
RefineryGeneration initial_generation(const Dataset& ds);

/// Targets for generation t from generation t-1's fold-out EPs.
RefineryGeneration next_generation(const Dataset& ds, const EpMap& previous, RefineryMode mode, int t);

/// Trains one model per fold on the other folds' segments and predicts the
/// held-out utterances. Appends one FoldAudit per fold when audits is non-null.
EpMap generate_eps_foldout(const Dataset& ds, const RefineryGeneration& gen, const RefineryConfig& cfg,
                           const FoldPlan& plan, std::vector<FoldAudit>* audits = nullptr,
                           const RefineryHooks* hooks = nullptr);

RefineryResult run_refinery(const Dataset& ds, const RefineryConfig& cfg, const RefineryHooks& hooks = {});

/// Returns one message per violation: an utterance whose EP came from a model
/// that trained on any of its segments, or an utterance without exactly one
/// producing model in a generation.
std::vector<std::string> audit_fold_purity(const RefineryResult& result, const Dataset& ds);

}  // namespace epr

#endif  // EPR_REFINERY_HPP_
