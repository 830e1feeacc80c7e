// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "epr/trainer.hpp"

using namespace epr;

namespace {

Segment constant_segment(const std::string& id, double level, int rows = 16, int cols = 8) {
  Segment s;
  s.utterance_id = id;
  s.values = Matrix::Constant(rows, cols, level);
  s.values(0, 0) += level;  // break the symmetry of a flat patch
  return s;
}

}  // namespace

TEST_CASE("training configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam_beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.architecture = "nope";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a network overfits two distinct segments") {
  std::vector<Segment> segs{constant_segment("a", 1.0), constant_segment("b", -1.0)};
  std::vector<EmotionDistribution> t{EmotionDistribution::one_hot(2, 0), EmotionDistribution::one_hot(2, 1)};
  // Repeat so both utterances survive the validation split.
  for (int i = 0; i < 10; ++i) {
    segs.push_back(constant_segment("a" + std::to_string(i), 1.0));
    t.push_back(EmotionDistribution::one_hot(2, 0));
    segs.push_back(constant_segment("b" + std::to_string(i), -1.0));
    t.push_back(EmotionDistribution::one_hot(2, 1));
  }
  TrainConfig cfg;
  cfg.architecture = "conv:4,4";
  cfg.batch_size = 4;
  cfg.max_epochs = 30;
  cfg.early_stop_patience = 30;
  cfg.initial_lr = 0.01;
  TrainLog log;
  const Model m = train_segment_classifier(segs, t, cfg, {"pos", "neg"}, &log);
  CHECK(predict(m, segs[0])[0] > 0.95);
  CHECK(predict(m, segs[1])[1] > 0.95);
  CHECK(log.train_loss.back() < log.initial_train_loss);
  CHECK(m.class_names == std::vector<std::string>{"pos", "neg"});
}

TEST_CASE("training is deterministic and seed-dependent") {
  std::mt19937_64 g(1);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<Segment> segs;
  std::vector<EmotionDistribution> t;
  for (int i = 0; i < 40; ++i) {
    Segment s;
    s.utterance_id = "u" + std::to_string(i / 4);
    s.index = i % 4;
    s.values = Matrix(16, 8);
    for (Eigen::Index j = 0; j < s.values.size(); ++j) s.values.data()[j] = d(g) + (i % 2 ? 1.0 : -1.0);
    segs.push_back(s);
    t.push_back(EmotionDistribution::one_hot(2, static_cast<std::size_t>(i % 2)));
  }
  TrainConfig cfg;
  cfg.architecture = "conv:3,3";
  cfg.batch_size = 8;
  cfg.max_epochs = 3;
  cfg.seed = 4;
  TrainLog l1, l2;
  const Model a = train_segment_classifier(segs, t, cfg, {}, &l1);
  const Model b = train_segment_classifier(segs, t, cfg, {}, &l2);
  CHECK(a.params == b.params);
  CHECK(l1.train_loss == l2.train_loss);
  CHECK(l1.validation_utterances.size() == 1u);  // floor(0.1 * 10 utterances)
  cfg.seed = 5;
  CHECK(train_segment_classifier(segs, t, cfg).params != a.params);
}

TEST_CASE("early stopping keeps the best epoch") {
  std::vector<Segment> segs;
  std::vector<EmotionDistribution> t;
  std::mt19937_64 g(2);
  std::normal_distribution<double> d(0.0, 1.0);
  for (int i = 0; i < 60; ++i) {
    Segment s;
    s.utterance_id = "u" + std::to_string(i);
    s.values = Matrix(16, 8);
    for (Eigen::Index j = 0; j < s.values.size(); ++j) s.values.data()[j] = d(g);
    segs.push_back(s);
    t.push_back(EmotionDistribution::one_hot(2, g() % 2));  // pure noise labels
  }
  TrainConfig cfg;
  cfg.architecture = "conv:4,4;dense:16";
  cfg.batch_size = 4;
  cfg.initial_lr = 0.01;
  cfg.validation_fraction = 0.25;
  TrainLog log;
  train_segment_classifier(segs, t, cfg, {}, &log);
  REQUIRE(!log.val_loss.empty());
  CHECK(log.epochs_run < cfg.max_epochs);
  CHECK(log.epochs_run - 1 - log.best_epoch == cfg.early_stop_patience);
  CHECK(log.val_loss[static_cast<std::size_t>(log.best_epoch)] ==
        *std::min_element(log.val_loss.begin(), log.val_loss.end()));
}

TEST_CASE("divergence is reported as a numeric error") {
  std::vector<Segment> segs{constant_segment("a", 1e3), constant_segment("b", -1e3)};
  std::vector<EmotionDistribution> t{EmotionDistribution::one_hot(2, 0), EmotionDistribution::one_hot(2, 1)};
  TrainConfig cfg;
  cfg.architecture = "conv:2,2";
  cfg.max_epochs = 5;
  cfg.initial_lr = 1e308;
  CHECK_THROWS_AS(train_segment_classifier(segs, t, cfg), NumericError);
}

TEST_CASE("mismatched inputs are rejected") {
  std::vector<Segment> segs{constant_segment("a", 1.0)};
  std::vector<EmotionDistribution> t;
  CHECK_THROWS_AS(train_segment_classifier(segs, t, TrainConfig{}), ConfigError);
  CHECK_THROWS_AS(train_segment_classifier({}, {}, TrainConfig{}), DataError);
}
