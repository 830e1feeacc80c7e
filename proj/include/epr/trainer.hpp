// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training of the segment classifier against soft or hard targets.

#ifndef EPR_TRAINER_HPP_
#define EPR_TRAINER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epr/distribution.hpp"
#include "epr/features.hpp"
#include "epr/network.hpp"

namespace epr {

struct TrainConfig {
  std::string architecture = "compact";
  double initial_lr = 0.001;
  double lr_decay = 0.8;       // multiplied in every lr_decay_epochs epochs
  int lr_decay_epochs = 2;
  int batch_size = 128;
  int early_stop_patience = 3;
  int max_epochs = 20;
  // Adam moments; the defaults of the reference framework.
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainLog {
  std::vector<double> train_loss;  // mean CE over the training split, per epoch
  std::vector<double> val_loss;    // empty entries when no validation split
  double initial_train_loss = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
  std::vector<std::string> validation_utterances;
};

/// Trains a freshly initialized network. Segments of one utterance never
/// straddle the train/validation split. Returns the parameters with the best
/// monitored loss (validation loss when a validation split exists, training
/// loss otherwise). Deterministic given cfg.seed and the input order.
Model train_segment_classifier(std::span<const Segment> segments, std::span<const EmotionDistribution> targets,
                               const TrainConfig& cfg, std::vector<std::string> class_names = {},
                               TrainLog* log = nullptr);

/// Mean cross-entropy of the model over a dataset.
double mean_cross_entropy(const Model& m, std::span<const Segment> segments,
                          std::span<const EmotionDistribution> targets);

}  // namespace epr

#endif  // EPR_TRAINER_HPP_
