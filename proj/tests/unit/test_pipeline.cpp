// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "epr/pipeline.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace epr;

namespace {

SyntheticCorpusSpec small_spec() {
  SyntheticCorpusSpec spec;
  spec.n_classes = 3;
  spec.utterances_per_class = 4;
  spec.min_segments = 3;
  spec.max_segments = 5;
  spec.seed = 2;
  return spec;
}

ExperimentConfig small_config(const std::string& store, const std::string& out) {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.feature_store = store;
  cfg.output_dir = out;
  cfg.train.architecture = "conv:2,2,2,2";
  cfg.train.batch_size = 16;
  cfg.train.max_epochs = 2;
  cfg.generations = 2;
  cfg.refinery_folds = 3;
  cfg.forest.n_trees = 5;
  cfg.eval.folds = 3;
  return cfg;
}

}  // namespace

TEST_CASE("configuration JSON round trip and strictness") {
  ExperimentConfig cfg;
  cfg.seed = 77;
  cfg.mode = RefineryMode::kStandard;
  cfg.train.batch_size = 32;
  cfg.statistics = {Statistic::kMean, Statistic::kMax};
  const std::string text = config_to_json(cfg);
  CHECK(config_to_json(config_from_json(text)) == text);

  const auto partial = config_from_json(R"({"schema_version": 1, "refinery": {"mode": "sEPR"}})");
  CHECK(partial.mode == RefineryMode::kStandard);
  CHECK(partial.train.initial_lr == 0.001);
  CHECK(partial.train.batch_size == 128);
  CHECK(partial.eval.folds == 10);

  CHECK_THROWS_AS(config_from_json(R"({"schema_version": 2})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"trian": {}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"batchsize": 3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"batch_size": "big"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"seed": -1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"refinery": {"mode": "EPR"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{not json"), ConfigError);

  ExperimentConfig bad;
  bad.mode = RefineryMode::kNone;
  CHECK_THROWS_AS(bad.validate(), ConfigError);  // baseline with 3 generations
  bad.generations = 1;
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("config paths resolve against the config file") {
  testing::TempDir dir("cfg");
  fs::create_directories(dir / "sub");
  write_text_atomic(dir / "sub/c.json", R"({"feature_store": "store", "output_dir": "/abs/out"})");
  const auto cfg = load_config(dir / "sub/c.json");
  CHECK(cfg.feature_store == dir / "sub/store");
  CHECK(cfg.output_dir == "/abs/out");
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("corpus spec JSON") {
  const auto spec = corpus_spec_from_json(R"({"n_classes": 3, "mixture_mode": "pure", "features": {"n_mels": 32}})");
  CHECK(spec.n_classes == 3);
  CHECK(spec.mixture_mode == MixtureMode::kPure);
  CHECK(spec.n_mels == 32);
  CHECK(corpus_spec_from_json(corpus_spec_to_json(spec)).n_mels == 32);
  CHECK_THROWS_AS(corpus_spec_from_json(R"({"min_segments": 0})"), ConfigError);
  CHECK_THROWS_AS(corpus_spec_from_json(R"({"colour": 1})"), ConfigError);
}

TEST_CASE("written corpora load back as datasets") {
  testing::TempDir dir("corpus");
  const auto corpus = generate_synthetic_corpus(small_spec());
  write_corpus(corpus, dir.str());
  for (const char* f : {"manifest.csv", "classes.txt", "store.json", "segments.csv", "ground_truth.csv", "corpus.json"})
    CHECK(fs::exists(dir / f));
  const Dataset ds = load_feature_store(dir.str(), SegmentSpec{});
  const Dataset direct = corpus.to_dataset();
  REQUIRE(ds.utterances.size() == direct.utterances.size());
  for (std::size_t i = 0; i < ds.utterances.size(); ++i) {
    CHECK(ds.utterances[i].id == direct.utterances[i].id);
    CHECK(ds.utterances[i].label == direct.utterances[i].label);
    REQUIRE(ds.utterances[i].segments.size() == direct.utterances[i].segments.size());
    for (std::size_t j = 0; j < ds.utterances[i].segments.size(); ++j)
      CHECK(ds.utterances[i].segments[j].values == direct.utterances[i].segments[j].values);
  }
  const auto seg_rows = read_csv(dir / "segments.csv").rows.size();
  CHECK(seg_rows == ds.n_segments());
  CHECK(read_csv(dir / "ground_truth.csv").rows.size() == ds.n_segments());
}

TEST_CASE("featurize reports bad files and keeps going") {
  testing::TempDir dir("feat");
  std::vector<double> one_second(16000);
  for (std::size_t i = 0; i < one_second.size(); ++i) one_second[i] = 0.3 * std::sin(0.05 * static_cast<double>(i));
  write_wav_pcm16(dir / "good.wav", one_second, 16000);
  write_wav_pcm16(dir / "empty.wav", {}, 16000);
  write_wav_pcm16(dir / "short.wav", std::vector<double>(3000, 0.1), 16000);
  CorpusManifest m;
  m.class_names = {"a", "b"};
  m.base_dir = dir.str();
  m.entries = {{"good", "good.wav", "a", "s"}, {"empty", "empty.wav", "b", "s"}, {"short", "short.wav", "b", "s"}};
  const auto report = featurize(m, FrameSpec{}, SegmentSpec{}, dir / "store");
  CHECK(report.succeeded == 1);
  REQUIRE(report.failures.size() == 2u);
  CHECK(report.failures[0].first == "empty");
  CHECK(report.failures[1].second.find("too short") != std::string::npos);
  const auto segs = read_csv(dir / "store/segments.csv");
  CHECK(segs.rows.size() == 23u);
  const auto first = read_spectrogram_csv(dir / "store/features/good.csv");
  CHECK(first.values.rows() == 64);
  CHECK(first.values.cols() == 98);
  // Re-running on unchanged inputs reproduces the store byte for byte.
  const std::string before = read_text(dir / "store/features/good.csv");
  featurize(m, FrameSpec{}, SegmentSpec{}, dir / "store");
  CHECK(read_text(dir / "store/features/good.csv") == before);

  m.entries = {{"empty", "empty.wav", "b", "s"}};
  CHECK_THROWS_AS(featurize(m, FrameSpec{}, SegmentSpec{}, dir / "store2"), DataError);
}

TEST_CASE("end-to-end run: layout, determinism, resume and exports") {
  testing::TempDir dir("run");
  write_corpus(generate_synthetic_corpus(small_spec()), dir / "store");
  const auto cfg = small_config(dir / "store", dir / "run1");
  const auto report = run_experiment(cfg);
  REQUIRE(report.generations.size() == 2u);
  for (const char* f : {"config.json", "metrics.json", "forest.json", "run_manifest.json"}) CHECK(fs::exists(dir / ("run1/" + std::string(f))));
  for (const char* f : {"eps.csv", "targets.csv", "representation.csv", "predictions.csv", "confusion.csv", "audit.json",
                        "models/fold_00.eprm"})
    CHECK(fs::exists(dir / ("run1/gen_02/" + std::string(f))));
  CHECK(report.generations[1].min_target_label_mass >= 0.5);
  CHECK(audit_run(dir / "run1").empty());

  // Same config into a second directory: byte-identical EPs and metrics.
  auto cfg2 = cfg;
  cfg2.output_dir = dir / "run2";
  run_experiment(cfg2);
  for (const char* f : {"gen_01/eps.csv", "gen_02/eps.csv", "metrics.json", "gen_02/representation.csv"})
    CHECK(read_text(dir / ("run1/" + std::string(f))) == read_text(dir / ("run2/" + std::string(f))));

  // Resume: a finished generation is reused, a missing one is recomputed identically.
  fs::remove_all(dir / "run2/gen_02");
  const auto resumed = run_experiment(cfg2);
  CHECK(resumed.generations[0].resumed);
  CHECK_FALSE(resumed.generations[1].resumed);
  CHECK(read_text(dir / "run1/gen_02/eps.csv") == read_text(dir / "run2/gen_02/eps.csv"));
  CHECK(read_text(dir / "run1/metrics.json") == read_text(dir / "run2/metrics.json"));

  // A different configuration may not reuse the directory.
  auto other = cfg2;
  other.seed = 6;
  CHECK_THROWS_AS(run_experiment(other), ConfigError);

  // Stored metrics can be recomputed from the exports.
  const auto g = evaluate_run(dir / "run1", 2);
  CHECK(g.wa == report.generations[1].wa);
  CHECK(g.confusion.rows() == report.generations[1].confusion.rows());
  CHECK_THROWS_AS(evaluate_run(dir / "run1", 5), DataError);

  // EP evolution export: T * N rows, each a distribution.
  const auto ds = load_feature_store(dir / "store", SegmentSpec{});
  const auto& u = ds.utterances[0];
  write_text_atomic(dir / "evo.csv", export_ep_evolution(dir / "run1", u.id));
  const auto evo = read_csv(dir / "evo.csv");
  CHECK(evo.rows.size() == 2 * u.segments.size());
  for (const auto& r : evo.rows) {
    double s = 0.0;
    for (std::size_t c = 3; c < r.size(); ++c) s += parse_double(r[c], "evo");
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(export_ep_evolution(dir / "run1", "nobody"), DataError);

  // A tampered audit is detected.
  std::string audit = read_text(dir / "run1/gen_01/audit.json");
  const auto pos = audit.find("\"training_utterances\": [");
  REQUIRE(pos != std::string::npos);
  audit.insert(pos + 24, "\"" + u.id + "\",");
  write_text_atomic(dir / "run1/gen_01/audit.json", audit);
  CHECK_FALSE(audit_run(dir / "run1").empty());
}

TEST_CASE("baseline run and feature-store mismatches") {
  testing::TempDir dir("baseline");
  write_corpus(generate_synthetic_corpus(small_spec()), dir / "store");
  auto cfg = small_config(dir / "store", dir / "base");
  cfg.mode = RefineryMode::kNone;
  cfg.generations = 1;
  const auto r = run_experiment(cfg);
  CHECK(r.generations.size() == 1u);
  CHECK(r.generations[0].mean_target_entropy == 0.0);

  auto wrong = cfg;
  wrong.frames.n_mels = 40;
  wrong.output_dir = dir / "other";
  CHECK_THROWS_AS(run_experiment(wrong), ConfigError);
  wrong = cfg;
  wrong.feature_store = dir / "nowhere";
  CHECK_THROWS_AS(run_experiment(wrong), DataError);
}

TEST_CASE("cross-validation scores every utterance once") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::vector<FoldItem> items;
  for (int i = 0; i < 30; ++i) {
    x.push_back({static_cast<double>(i % 3), static_cast<double>(i)});
    y.push_back(i % 3);
    items.push_back({"u" + std::to_string(i), i % 3, ""});
  }
  ForestConfig fc;
  fc.n_trees = 5;
  const auto cv = cross_validate_forest(x, y, y, items, 3, fc, 5, 1);
  CHECK(cv.confusion.total() == 30);
  CHECK(weighted_accuracy(cv.confusion) == 1.0);
  std::vector<int> shifted = y;
  for (auto& v : shifted) v = (v + 1) % 3;
  CHECK(weighted_accuracy(cross_validate_forest(x, y, shifted, items, 3, fc, 5, 1).confusion) == 0.0);
}
