// SPDX-License-Identifier: Apache-2.0

#include "epr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace epr {

void TrainConfig::validate() const {
  if (!(initial_lr > 0) || !(lr_decay > 0) || lr_decay_epochs <= 0 || batch_size <= 0 ||
      early_stop_patience <= 0 || max_epochs <= 0)
    throw ConfigError("training hyperparameters must be positive");
  if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1) || !(adam_epsilon > 0))
    throw ConfigError("Adam moments must lie in (0, 1) and epsilon must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5))
    throw ConfigError("validation_fraction must lie in (0, 0.5]");
  Architecture::parse(architecture);
}

namespace {

double dataset_loss(const Network& net, std::span<const double> params, std::span<const Segment> segments,
                    std::span<const EmotionDistribution> targets, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, idx.size() - start);
    std::vector<const Segment*> ptrs(n);
    std::vector<EmotionDistribution> tg(n);
    for (std::size_t i = 0; i < n; ++i) {
      ptrs[i] = &segments[idx[start + i]];
      tg[i] = targets[idx[start + i]];
    }
    total += net.loss(params, net.pack(ptrs), tg, LossKind::kCrossEntropy) * static_cast<double>(n);
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace

Model train_segment_classifier(std::span<const Segment> segments, std::span<const EmotionDistribution> targets,
                               const TrainConfig& cfg, std::vector<std::string> class_names, TrainLog* log) {
  cfg.validate();
  if (segments.empty()) throw DataError("cannot train on an empty dataset");
  if (segments.size() != targets.size())
    throw ConfigError("segment/target count mismatch: " + std::to_string(segments.size()) + " vs " +
                      std::to_string(targets.size()));
  const std::size_t k = targets[0].size();
  for (const auto& t : targets)
    if (t.size() != k) throw ConfigError("targets have inconsistent class counts");
  if (class_names.empty())
    for (std::size_t c = 0; c < k; ++c) class_names.push_back("class_" + std::to_string(c));
  if (class_names.size() != k) throw ConfigError("class name count does not match targets");

  Model model;
  model.arch = Architecture::parse(cfg.architecture);
  model.n_classes = static_cast<int>(k);
  model.class_names = std::move(class_names);
  model.seed = cfg.seed;
  model.input_rows = static_cast<int>(segments[0].values.rows());
  model.input_cols = static_cast<int>(segments[0].values.cols());
  const Network net = model.network();

  // Utterance-level validation split.
  std::vector<std::string> utts;
  std::unordered_map<std::string, std::size_t> utt_index;
  std::vector<std::size_t> seg_utt(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto [it, inserted] = utt_index.emplace(segments[i].utterance_id, utts.size());
    if (inserted) utts.push_back(segments[i].utterance_id);
    seg_utt[i] = it->second;
  }
  std::vector<std::size_t> order(utts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg.seed, {1}));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(utts.size())));
  if (n_val >= utts.size()) n_val = utts.size() - 1;
  std::vector<char> is_val(utts.size(), 0);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < segments.size(); ++i) (is_val[seg_utt[i]] ? val_idx : train_idx).push_back(i);

  TrainLog local_log;
  TrainLog& lg = log ? *log : local_log;
  lg = TrainLog{};
  for (std::size_t i = 0; i < n_val; ++i) lg.validation_utterances.push_back(utts[order[i]]);

  std::vector<double> params = net.init_params(derive_seed(cfg.seed, {0}));
  std::vector<double> best_params = params;
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  lg.initial_train_loss = dataset_loss(net, params, segments, targets, train_idx);

  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (train_idx.size() + bs - 1) / bs;
  const double decay_steps = static_cast<double>(cfg.lr_decay_epochs * steps_per_epoch);
  std::size_t step = 0;
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;
  Rng shuffle_rng(derive_seed(cfg.seed, {2}));

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_idx);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += bs) {
      const std::size_t n = std::min(bs, train_idx.size() - start);
      std::vector<const Segment*> ptrs(n);
      std::vector<EmotionDistribution> tg(n);
      for (std::size_t i = 0; i < n; ++i) {
        ptrs[i] = &segments[train_idx[start + i]];
        tg[i] = targets[train_idx[start + i]];
      }
      const double loss = net.loss_and_gradient(params, net.pack(ptrs), tg, LossKind::kCrossEntropy, grad);
      if (!std::isfinite(loss))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(step + 1));
      epoch_loss += loss * static_cast<double>(n);

      // Continuous exponential decay of the step size.
      ++step;
      const double lr = cfg.initial_lr * std::pow(cfg.lr_decay, static_cast<double>(step - 1) / decay_steps);
      const double t = static_cast<double>(step);
      const double lr_t = lr * std::sqrt(1.0 - std::pow(cfg.adam_beta2, t)) / (1.0 - std::pow(cfg.adam_beta1, t));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
        params[i] -= lr_t * m[i] / (std::sqrt(v[i]) + cfg.adam_epsilon);
        if (!std::isfinite(params[i]))
          throw NumericError("training diverged: non-finite parameter at epoch " + std::to_string(epoch + 1) +
                             ", step " + std::to_string(step));
      }
    }
    epoch_loss /= static_cast<double>(train_idx.size());
    lg.train_loss.push_back(epoch_loss);
    lg.epochs_run = epoch + 1;

    double monitored = epoch_loss;
    if (!val_idx.empty()) {
      monitored = dataset_loss(net, params, segments, targets, val_idx);
      lg.val_loss.push_back(monitored);
    }
    if (!std::isfinite(monitored))
      throw NumericError("training diverged: non-finite monitored loss at epoch " + std::to_string(epoch + 1));
    if (monitored < best) {
      best = monitored;
      best_params = params;
      lg.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.early_stop_patience) {
      break;
    }
  }
  log_info("trained " + std::to_string(params.size()) + " parameters on " + std::to_string(train_idx.size()) +
           " segments: " + std::to_string(lg.epochs_run) + " epochs, best epoch " + std::to_string(lg.best_epoch + 1));
  model.params = std::move(best_params);
  return model;
}

double mean_cross_entropy(const Model& m, std::span<const Segment> segments,
                          std::span<const EmotionDistribution> targets) {
  if (segments.size() != targets.size() || segments.empty())
    throw ConfigError("mean_cross_entropy: size mismatch or empty input");
  const auto preds = predict_batch(m, segments);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += cross_entropy(preds[i], targets[i]);
  return total / static_cast<double>(preds.size());
}

}  // namespace epr
