// SPDX-License-Identifier: Apache-2.0

#include "epr/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace epr {

namespace {

constexpr std::uint64_t kRefinerySeedTag = 1;
constexpr std::uint64_t kForestSeedTag = 2;
constexpr std::uint64_t kEvalSeedTag = 3;

// Strict reader over one JSON object: typed lookups plus unknown-key detection.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path(key) + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError(path(key) + " must be a nonnegative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path(key) + " must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path(key) + " must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path(key) + " must be a string");
    }
    try {
      out = v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), path(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + path(k.c_str()) + "'");
  }

 private:
  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

void read_schema_version(Section& root) {
  int version = kConfigSchemaVersion;
  root.get("schema_version", version);
  if (version != kConfigSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kConfigSchemaVersion) + ")");
}

void read_features(Section& root, FrameSpec& frames, SegmentSpec& segment) {
  if (auto s = root.child("features")) {
    s->get("win_ms", frames.win_ms);
    s->get("hop_ms", frames.hop_ms);
    s->get("fft_len", frames.fft_len);
    s->get("n_mels", frames.n_mels);
    s->get("seg_frames", segment.seg_frames);
    s->get("seg_hop_ms", segment.seg_hop_ms);
    s->finish();
  }
}

json features_json(const FrameSpec& frames, const SegmentSpec& segment) {
  return {{"win_ms", frames.win_ms},   {"hop_ms", frames.hop_ms},         {"fft_len", frames.fft_len},
          {"n_mels", frames.n_mels},   {"seg_frames", segment.seg_frames}, {"seg_hop_ms", segment.seg_hop_ms}};
}

std::string gen_path(const std::string& run_dir, int t) { return (fs::path(run_dir) / generation_dir_name(t)).string(); }

json confusion_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (const auto& r : cm.rows()) rows.push_back(r);
  return rows;
}

}  // namespace

std::string generation_dir_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "gen_%02d", t);
  return buf;
}

// --- Configuration -------------------------------------------------------------

void ExperimentConfig::validate() const {
  frames.validate(16000);
  segment.validate(frames);
  train.validate();
  refinery_config().validate();
  if (statistics.empty()) throw ConfigError("representation.statistics must not be empty");
  forest_config().validate(static_cast<int>(statistics.size()) * 2);
  if (eval.folds < 2) throw ConfigError("eval.folds must be at least 2");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

RefineryConfig ExperimentConfig::refinery_config() const {
  RefineryConfig rc;
  rc.generations = generations;
  rc.mode = mode;
  rc.folds = refinery_folds;
  rc.grouping = refinery_grouping;
  rc.seed = derive_seed(seed, {kRefinerySeedTag});
  rc.train = train;
  return rc;
}

ForestConfig ExperimentConfig::forest_config() const {
  ForestConfig fc = forest;
  fc.seed = derive_seed(seed, {kForestSeedTag});
  return fc;
}

std::uint64_t ExperimentConfig::eval_seed() const { return derive_seed(seed, {kEvalSeedTag}); }

ExperimentConfig config_from_json(const std::string& text) {
  const json j = parse_json(text, "configuration");
  ExperimentConfig cfg;
  Section root(j, "");
  read_schema_version(root);
  root.get("seed", cfg.seed);
  root.get("feature_store", cfg.feature_store);
  root.get("output_dir", cfg.output_dir);
  read_features(root, cfg.frames, cfg.segment);
  if (auto s = root.child("train")) {
    s->get("architecture", cfg.train.architecture);
    s->get("initial_lr", cfg.train.initial_lr);
    s->get("lr_decay", cfg.train.lr_decay);
    s->get("lr_decay_epochs", cfg.train.lr_decay_epochs);
    s->get("batch_size", cfg.train.batch_size);
    s->get("early_stop_patience", cfg.train.early_stop_patience);
    s->get("max_epochs", cfg.train.max_epochs);
    s->get("adam_beta1", cfg.train.adam_beta1);
    s->get("adam_beta2", cfg.train.adam_beta2);
    s->get("adam_epsilon", cfg.train.adam_epsilon);
    s->get("validation_fraction", cfg.train.validation_fraction);
    s->finish();
  }
  if (auto s = root.child("refinery")) {
    std::string mode = mode_name(cfg.mode), grouping = grouping_name(cfg.refinery_grouping);
    s->get("generations", cfg.generations);
    s->get("mode", mode);
    s->get("folds", cfg.refinery_folds);
    s->get("grouping", grouping);
    s->finish();
    cfg.mode = parse_mode(mode);
    cfg.refinery_grouping = parse_grouping(grouping);
  }
  if (auto s = root.child("representation")) {
    std::vector<std::string> names;
    for (Statistic st : cfg.statistics) names.push_back(statistic_name(st));
    s->get("statistics", names);
    s->finish();
    cfg.statistics.clear();
    for (const auto& n : names) cfg.statistics.push_back(parse_statistic(n));
  }
  if (auto s = root.child("forest")) {
    s->get("n_trees", cfg.forest.n_trees);
    s->get("max_features", cfg.forest.max_features);
    s->get("max_depth", cfg.forest.max_depth);
    s->get("min_samples_split", cfg.forest.min_samples_split);
    s->get("bootstrap", cfg.forest.bootstrap);
    s->finish();
  }
  if (auto s = root.child("eval")) {
    std::string grouping = grouping_name(cfg.eval.grouping);
    s->get("folds", cfg.eval.folds);
    s->get("grouping", grouping);
    s->finish();
    cfg.eval.grouping = parse_grouping(grouping);
  }
  root.finish();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = cfg.seed;
  j["feature_store"] = cfg.feature_store;
  j["output_dir"] = cfg.output_dir;
  j["features"] = features_json(cfg.frames, cfg.segment);
  const TrainConfig& t = cfg.train;
  j["train"] = {{"architecture", t.architecture},
                {"initial_lr", t.initial_lr},
                {"lr_decay", t.lr_decay},
                {"lr_decay_epochs", t.lr_decay_epochs},
                {"batch_size", t.batch_size},
                {"early_stop_patience", t.early_stop_patience},
                {"max_epochs", t.max_epochs},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_epsilon", t.adam_epsilon},
                {"validation_fraction", t.validation_fraction}};
  j["refinery"] = {{"generations", cfg.generations},
                   {"mode", mode_name(cfg.mode)},
                   {"folds", cfg.refinery_folds},
                   {"grouping", grouping_name(cfg.refinery_grouping)}};
  std::vector<std::string> names;
  for (Statistic s : cfg.statistics) names.push_back(statistic_name(s));
  j["representation"] = {{"statistics", names}};
  j["forest"] = {{"n_trees", cfg.forest.n_trees},
                 {"max_features", cfg.forest.max_features},
                 {"max_depth", cfg.forest.max_depth},
                 {"min_samples_split", cfg.forest.min_samples_split},
                 {"bootstrap", cfg.forest.bootstrap}};
  j["eval"] = {{"folds", cfg.eval.folds}, {"grouping", grouping_name(cfg.eval.grouping)}};
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read configuration: ") + e.what());
  }
  ExperimentConfig cfg = config_from_json(text);
  const fs::path base = fs::path(path).parent_path();
  const auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(cfg.feature_store);
  resolve(cfg.output_dir);
  return cfg;
}

SyntheticCorpusSpec corpus_spec_from_json(const std::string& text) {
  const json j = parse_json(text, "corpus spec");
  SyntheticCorpusSpec spec;
  Section root(j, "");
  read_schema_version(root);
  std::string mixture = mixture_mode_name(spec.mixture_mode);
  root.get("seed", spec.seed);
  root.get("n_classes", spec.n_classes);
  root.get("class_names", spec.class_names);
  root.get("utterances_per_class", spec.utterances_per_class);
  root.get("min_segments", spec.min_segments);
  root.get("max_segments", spec.max_segments);
  root.get("mixture_mode", mixture);
  root.get("off_class_mass", spec.off_class_mass);
  root.get("noise_level", spec.noise_level);
  root.get("template_contrast", spec.template_contrast);
  root.get("label_flip_fraction", spec.label_flip_fraction);
  root.get("n_speakers", spec.n_speakers);
  read_features(root, spec.frames, spec.segment);
  root.finish();
  spec.mixture_mode = parse_mixture_mode(mixture);
  spec.n_mels = spec.frames.n_mels;
  if (!spec.class_names.empty() && !j.contains("n_classes")) spec.n_classes = static_cast<int>(spec.class_names.size());
  spec.validate();
  return spec;
}

std::string corpus_spec_to_json(const SyntheticCorpusSpec& spec) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = spec.seed;
  j["n_classes"] = spec.n_classes;
  j["class_names"] = spec.resolved_class_names();
  j["utterances_per_class"] = spec.utterances_per_class;
  j["min_segments"] = spec.min_segments;
  j["max_segments"] = spec.max_segments;
  j["mixture_mode"] = mixture_mode_name(spec.mixture_mode);
  j["off_class_mass"] = spec.off_class_mass;
  j["noise_level"] = spec.noise_level;
  j["template_contrast"] = spec.template_contrast;
  j["label_flip_fraction"] = spec.label_flip_fraction;
  j["n_speakers"] = spec.n_speakers;
  FrameSpec frames = spec.frames;
  frames.n_mels = spec.n_mels;
  j["features"] = features_json(frames, spec.segment);
  return j.dump(2) + "\n";
}

// --- Corpus generation and featurization --------------------------------------

void write_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  const int k = static_cast<int>(corpus.class_names.size());
  CorpusManifest m;
  m.class_names = corpus.class_names;
  std::vector<std::pair<std::string, int>> frames_per_utt;
  std::vector<std::string> gt_header{"utterance_id", "segment_index", "true_label", "observed_label"};
  for (int c = 1; c <= k; ++c) gt_header.push_back("q_" + std::to_string(c));
  std::string gt = csv_line(gt_header);
  for (const auto& su : corpus.utterances) {
    const std::string& id = su.spectrogram.utterance_id;
    check_identifier(id, "utterance id");
    const std::string rel = "features/" + id + ".csv";
    write_spectrogram_csv(su.spectrogram, (fs::path(dir) / rel).string());
    m.entries.push_back({id, rel, corpus.class_names[static_cast<std::size_t>(su.label)], su.speaker});
    frames_per_utt.emplace_back(id, su.spectrogram.n_frames());
    for (std::size_t i = 0; i < su.segment_truth.size(); ++i) {
      std::vector<std::string> row{id, std::to_string(i), corpus.class_names[static_cast<std::size_t>(su.true_label)],
                                   corpus.class_names[static_cast<std::size_t>(su.label)]};
      for (int c = 0; c < k; ++c) row.push_back(format_double(su.segment_truth[i][static_cast<std::size_t>(c)]));
      gt += csv_line(row);
    }
  }
  write_manifest(m, dir);
  FrameSpec frames = corpus.spec.frames;
  frames.n_mels = corpus.spec.n_mels;
  write_store_info({frames, corpus.spec.segment}, dir);
  write_text_atomic((fs::path(dir) / "segments.csv").string(),
                    segment_index_csv(frames_per_utt, corpus.spec.segment, frames));
  write_text_atomic((fs::path(dir) / "ground_truth.csv").string(), gt);

  json j;
  j["format"] = "epr-synthetic-corpus";
  j["spec"] = json::parse(corpus_spec_to_json(corpus.spec));
  json templates = json::object();
  for (int c = 0; c < k; ++c) {
    std::vector<double> col(corpus.templates.col(c).data(), corpus.templates.col(c).data() + corpus.templates.rows());
    templates[corpus.class_names[static_cast<std::size_t>(c)]] = col;
  }
  j["class_templates"] = templates;
  j["template_model"] =
      "log-energy per mel bin: tilt -4 - 3*b/n_mels plus two class-specific Gaussian bumps; frames mix templates "
      "by their planted class weights, then speaker offset, utterance gain and Gaussian noise are added";
  write_text_atomic((fs::path(dir) / "corpus.json").string(), j.dump(2) + "\n");
}

FeaturizeReport featurize(const CorpusManifest& manifest, const FrameSpec& frames, const SegmentSpec& segment,
                          const std::string& out_dir) {
  manifest.validate();
  segment.validate(frames);
  FeaturizeReport report;
  CorpusManifest out;
  out.class_names = manifest.class_names;
  std::vector<std::pair<std::string, int>> frames_per_utt;
  for (const auto& e : manifest.entries) {
    try {
      const AudioClip clip = read_wav(manifest.resolve(e), e.utterance_id);
      const LogMelSpectrogram s = log_mel_spectrogram(clip, frames);
      segment_count(s.n_frames(), segment, frames);
      const std::string rel = "features/" + e.utterance_id + ".csv";
      write_spectrogram_csv(s, (fs::path(out_dir) / rel).string());
      out.entries.push_back({e.utterance_id, rel, e.label, e.speaker});
      frames_per_utt.emplace_back(e.utterance_id, s.n_frames());
      ++report.succeeded;
    } catch (const DataError& err) {
      log_warning("skipping '" + e.utterance_id + "': " + err.what());
      report.failures.emplace_back(e.utterance_id, err.what());
    }
  }
  if (report.succeeded == 0) throw DataError("no utterance could be featurized");
  write_manifest(out, out_dir);
  write_store_info({frames, segment}, out_dir);
  write_text_atomic((fs::path(out_dir) / "segments.csv").string(), segment_index_csv(frames_per_utt, segment, frames));
  return report;
}

// --- Utterance decisions ---------------------------------------------------------

CrossValidation cross_validate_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& train_labels,
                                      const std::vector<int>& eval_labels, const std::vector<FoldItem>& items,
                                      int n_classes, const ForestConfig& forest, int folds, std::uint64_t seed,
                                      FoldGrouping grouping) {
  if (x.size() != train_labels.size() || x.size() != eval_labels.size() || x.size() != items.size())
    throw ConfigError("cross-validation inputs differ in length");
  CrossValidation cv;
  cv.plan = kfold_split(items, folds, seed, grouping);
  cv.confusion = ConfusionMatrix(n_classes);
  cv.predictions.assign(x.size(), -1);
  std::vector<std::string> names;
  for (int c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  for (int f = 0; f < folds; ++f) {
    std::vector<std::vector<double>> xt;
    std::vector<int> yt;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (cv.plan.assignment[i] != f) {
        xt.push_back(x[i]);
        yt.push_back(train_labels[i]);
      }
    ForestConfig fc = forest;
    fc.seed = derive_seed(forest.seed, {static_cast<std::uint64_t>(f)});
    const Forest model = train_forest(xt, yt, fc, names);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (cv.plan.assignment[i] == f) {
        cv.predictions[i] = predict_forest(model, x[i]);
        cv.confusion.add(eval_labels[i], cv.predictions[i]);
      }
  }
  return cv;
}

std::vector<UtteranceRepresentation> dataset_representations(const Dataset& ds, const EpMap& eps,
                                                             const std::vector<Statistic>& stats) {
  std::vector<UtteranceRepresentation> reps;
  reps.reserve(ds.utterances.size());
  for (const auto& u : ds.utterances) {
    const auto it = eps.find(u.id);
    if (it == eps.end()) throw DataError("no emotion profile for utterance '" + u.id + "'");
    UtteranceRepresentation r = ep_statistics(it->second, stats);
    r.utterance_id = u.id;
    r.generation = it->second.generation;
    reps.push_back(std::move(r));
  }
  return reps;
}

// --- Runs -----------------------------------------------------------------------

namespace {

struct Decision {
  GenerationReport report;
  std::vector<UtteranceRepresentation> reps;
  std::vector<int> predictions;
};

Decision decide(const Dataset& ds, const EpMap& eps, const ExperimentConfig& cfg) {
  Decision d;
  d.reps = dataset_representations(ds, eps, cfg.statistics);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < ds.utterances.size(); ++i) {
    x.push_back(d.reps[i].features);
    y.push_back(ds.utterances[i].label);
  }
  const CrossValidation cv = cross_validate_forest(x, y, y, ds.fold_items(), ds.n_classes(), cfg.forest_config(),
                                                   cfg.eval.folds, cfg.eval_seed(), cfg.eval.grouping);
  d.predictions = cv.predictions;
  d.report.confusion = cv.confusion;
  d.report.wa = weighted_accuracy(cv.confusion);
  d.report.ua = unweighted_accuracy(cv.confusion);
  d.report.mean_ep_entropy = mean_ep_entropy(eps);
  return d;
}

void check_eps_match(const EpMap& eps, const Dataset& ds, const std::string& where) {
  if (eps.size() != ds.utterances.size())
    throw DataError(where + " holds " + std::to_string(eps.size()) + " utterances, the dataset has " +
                    std::to_string(ds.utterances.size()));
  for (const auto& u : ds.utterances) {
    const auto it = eps.find(u.id);
    if (it == eps.end()) throw DataError(where + " lacks utterance '" + u.id + "'");
    if (it->second.n_segments() != static_cast<int>(u.segments.size()) || it->second.n_classes() != ds.n_classes())
      throw DataError(where + ": profile of '" + u.id + "' does not match the dataset's shape");
    for (int i = 0; i < it->second.n_segments(); ++i) it->second.column(i);  // validates each column
  }
}

json audit_json(int t, const std::vector<FoldAudit>& audits) {
  json folds = json::array();
  for (const auto& a : audits)
    folds.push_back({{"fold", a.fold},
                     {"model_seed", a.model_seed},
                     {"training_utterances", a.training_utterances},
                     {"predicted_utterances", a.predicted_utterances}});
  return {{"generation", t}, {"folds", folds}};
}

void remove_partials(const fs::path& out) {
  if (!fs::exists(out)) return;
  for (const auto& de : fs::directory_iterator(out))
    if (de.is_directory() && de.path().extension() == ".partial") fs::remove_all(de.path());
}

std::string relative_config_text(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.feature_store = fs::absolute(c.feature_store).lexically_normal().string();
  c.output_dir = ".";
  return config_to_json(c);
}

}  // namespace

std::string metrics_json(const RunReport& report, const ExperimentConfig& cfg) {
  if (report.generations.empty()) throw ConfigError("run report has no generations");
  const GenerationReport& last = report.generations.back();
  json j;
  j["class_names"] = report.class_names;
  j["mode"] = mode_name(cfg.mode);
  j["final_generation"] = last.t;
  j["wa"] = last.wa;
  j["ua"] = last.ua;
  j["confusion_matrix"] = confusion_json(last.confusion);
  json gens = json::array();
  for (const auto& g : report.generations)
    gens.push_back({{"generation", g.t},
                    {"wa", g.wa},
                    {"ua", g.ua},
                    {"mean_ep_entropy", g.mean_ep_entropy},
                    {"mean_target_entropy", g.mean_target_entropy},
                    {"min_target_label_mass", g.min_target_label_mass},
                    {"confusion_matrix", confusion_json(g.confusion)}});
  j["generations"] = gens;
  return j.dump(2) + "\n";
}

RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (cfg.feature_store.empty()) throw ConfigError("feature_store is not set");
  const FeatureStoreInfo info = read_store_info(cfg.feature_store);
  if (info.frames.n_mels != cfg.frames.n_mels || info.frames.hop_ms != cfg.frames.hop_ms ||
      info.frames.win_ms != cfg.frames.win_ms || info.frames.fft_len != cfg.frames.fft_len)
    throw ConfigError("the feature store was framed differently from the configuration's features section");
  const Dataset ds = load_feature_store(cfg.feature_store, cfg.segment);

  const fs::path out(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  const std::string config_text = relative_config_text(cfg);
  const fs::path config_path = out / "config.json";
  if (fs::exists(config_path) && read_text(config_path.string()) != config_text) {
    if (opts.resume)
      throw ConfigError("output directory " + out.string() +
                        " holds a run with a different configuration; choose another output_dir or disable resume");
  }
  if (!opts.resume)
    for (int t = 1; fs::exists(gen_path(out.string(), t)); ++t) fs::remove_all(gen_path(out.string(), t));
  remove_partials(out);
  write_text_atomic(config_path.string(), config_text);

  RunReport report;
  report.class_names = ds.class_names;
  report.n_utterances = ds.utterances.size();
  report.n_segments = ds.n_segments();
  std::set<int> resumed;
  std::vector<FoldAudit> audits;

  RefineryHooks hooks;
  hooks.load_generation = [&](int t) -> std::optional<EpMap> {
    if (!opts.resume) return std::nullopt;
    const fs::path eps_path = fs::path(gen_path(out.string(), t)) / "eps.csv";
    if (!fs::exists(eps_path)) return std::nullopt;
    EpMap eps = read_ep_csv(eps_path.string());
    check_eps_match(eps, ds, eps_path.string());
    resumed.insert(t);
    log_info("generation " + std::to_string(t) + " resumed from " + eps_path.string());
    return eps;
  };
  hooks.on_model = [&](int t, int fold, const Model& m) {
    if (!opts.save_models) return;
    const fs::path dir = fs::path(gen_path(out.string(), t) + ".partial") / "models";
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "fold_%02d.eprm", fold);
    save_model(m, (dir / name).string());
  };
  hooks.on_fold = [&](const FoldAudit& a) { audits.push_back(a); };
  hooks.on_generation = [&](int t, const EpMap& eps, const RefineryGeneration& gen) {
    Decision d = decide(ds, eps, cfg);
    d.report.t = t;
    d.report.resumed = resumed.count(t) > 0;
    double min_mass = 1.0, ent = 0.0;
    std::size_t n = 0;
    for (const auto& u : ds.utterances)
      for (const auto& tg : gen.targets.at(u.id)) {
        min_mass = std::min(min_mass, tg[static_cast<std::size_t>(u.label)]);
        ent += entropy(tg);
        ++n;
      }
    d.report.min_target_label_mass = min_mass;
    d.report.mean_target_entropy = ent / static_cast<double>(n);
    log_info("generation " + std::to_string(t) + ": mean EP entropy " + format_double(d.report.mean_ep_entropy) +
             ", WA " + format_double(d.report.wa) + ", UA " + format_double(d.report.ua));
    report.generations.push_back(d.report);
    if (d.report.resumed) return;

    const std::string final_dir = gen_path(out.string(), t);
    const fs::path tmp(final_dir + ".partial");
    fs::create_directories(tmp);
    std::vector<std::string> ids;
    std::vector<int> truth;
    for (const auto& u : ds.utterances) {
      ids.push_back(u.id);
      truth.push_back(u.label);
    }
    write_text_atomic((tmp / "eps.csv").string(), ep_csv(eps));
    write_text_atomic((tmp / "targets.csv").string(), targets_csv(gen));
    write_text_atomic((tmp / "representation.csv").string(), representation_csv(d.reps));
    write_text_atomic((tmp / "predictions.csv").string(), predictions_csv(ids, truth, d.predictions, ds.class_names));
    write_text_atomic((tmp / "confusion.csv").string(), confusion_csv(d.report.confusion, ds.class_names));
    std::vector<FoldAudit> mine;
    for (const auto& a : audits)
      if (a.generation == t) mine.push_back(a);
    write_text_atomic((tmp / "audit.json").string(), audit_json(t, mine).dump(1) + "\n");
    fs::rename(tmp, final_dir);
  };

  const RefineryResult result = run_refinery(ds, cfg.refinery_config(), hooks);

  const auto reps = dataset_representations(ds, result.eps.back(), cfg.statistics);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < ds.utterances.size(); ++i) {
    x.push_back(reps[i].features);
    y.push_back(ds.utterances[i].label);
  }
  const Forest forest = train_forest(x, y, cfg.forest_config(), ds.class_names);
  save_forest(forest, (out / "forest.json.tmp").string());
  fs::rename(out / "forest.json.tmp", out / "forest.json");
  write_text_atomic((out / "metrics.json").string(), metrics_json(report, cfg));

  json manifest;
  manifest["format"] = "epr-run";
  manifest["config"] = json::parse(config_text);
  manifest["seeds"] = {{"master", cfg.seed},
                       {"refinery", cfg.refinery_config().seed},
                       {"forest", cfg.forest_config().seed},
                       {"eval_folds", cfg.eval_seed()}};
  manifest["dataset"] = {{"feature_store", fs::absolute(cfg.feature_store).lexically_normal().string()},
                         {"utterances", report.n_utterances},
                         {"segments", report.n_segments},
                         {"class_names", report.class_names}};
  json gens = json::array();
  for (const auto& g : report.generations)
    gens.push_back({{"generation", g.t}, {"directory", generation_dir_name(g.t)}, {"resumed", g.resumed}});
  manifest["generations"] = gens;
  write_text_atomic((out / "run_manifest.json").string(), manifest.dump(2) + "\n");
  return report;
}

GenerationReport evaluate_run(const std::string& run_dir, int generation) {
  const ExperimentConfig cfg = config_from_json(read_text((fs::path(run_dir) / "config.json").string()));
  if (generation <= 0) {
    generation = 0;
    while (fs::exists(gen_path(run_dir, generation + 1))) ++generation;
    if (generation == 0) throw DataError("run " + run_dir + " has no completed generation");
  }
  const std::string dir = gen_path(run_dir, generation);
  if (!fs::exists(dir)) throw DataError("run " + run_dir + " has no generation " + std::to_string(generation));
  const CorpusManifest m = read_manifest((fs::path(cfg.feature_store) / "manifest.csv").string());
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : m.entries) by_id[e.utterance_id] = &e;
  const auto reps = read_representation_csv((fs::path(dir) / "representation.csv").string());
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::vector<FoldItem> items;
  for (const auto& r : reps) {
    const auto it = by_id.find(r.utterance_id);
    if (it == by_id.end()) throw DataError("utterance '" + r.utterance_id + "' is not in the feature store manifest");
    x.push_back(r.features);
    y.push_back(m.label_index(it->second->label));
    items.push_back({r.utterance_id, y.back(), it->second->speaker});
  }
  const CrossValidation cv = cross_validate_forest(x, y, y, items, static_cast<int>(m.class_names.size()),
                                                   cfg.forest_config(), cfg.eval.folds, cfg.eval_seed(),
                                                   cfg.eval.grouping);
  GenerationReport g;
  g.t = generation;
  g.confusion = cv.confusion;
  g.wa = weighted_accuracy(cv.confusion);
  g.ua = unweighted_accuracy(cv.confusion);
  g.mean_ep_entropy = mean_ep_entropy(read_ep_csv((fs::path(dir) / "eps.csv").string()));
  return g;
}

std::string export_ep_evolution(const std::string& run_dir, const std::string& utterance_id) {
  std::string out;
  bool found = false;
  for (int t = 1; fs::exists(gen_path(run_dir, t)); ++t) {
    const EpMap eps = read_ep_csv((fs::path(gen_path(run_dir, t)) / "eps.csv").string());
    const auto it = eps.find(utterance_id);
    if (it == eps.end()) continue;
    EpMap one;
    one.emplace(it->first, it->second);
    std::string csv = ep_csv(one);
    if (found) csv.erase(0, csv.find('\n') + 1);
    out += csv;
    found = true;
  }
  if (!fs::exists(gen_path(run_dir, 1))) throw DataError("no completed generations in " + run_dir);
  if (!found) throw DataError("unknown utterance '" + utterance_id + "' in run " + run_dir);
  return out;
}

std::vector<std::string> audit_run(const std::string& run_dir) {
  std::vector<std::string> violations;
  int t = 1;
  for (; fs::exists(gen_path(run_dir, t)); ++t) {
    const fs::path dir(gen_path(run_dir, t));
    const EpMap eps = read_ep_csv((dir / "eps.csv").string());
    json j;
    try {
      j = json::parse(read_text((dir / "audit.json").string()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / "audit.json").string() + ": " + e.what());
    }
    std::map<std::string, int> producers;
    for (const auto& f : j.at("folds")) {
      const auto trained = f.at("training_utterances").get<std::set<std::string>>();
      for (const auto& id : f.at("predicted_utterances").get<std::vector<std::string>>()) {
        ++producers[id];
        if (trained.count(id))
          violations.push_back("generation " + std::to_string(t) + ", fold " + std::to_string(f.at("fold").get<int>()) +
                               ": utterance '" + id + "' was in the training set of the model that produced its EP");
      }
    }
    for (const auto& [id, ep] : eps) {
      const int n = producers.count(id) ? producers[id] : 0;
      if (n != 1)
        violations.push_back("generation " + std::to_string(t) + ": utterance '" + id + "' has " + std::to_string(n) +
                             " producing models");
    }
  }
  if (t == 1) throw DataError("no completed generations in " + run_dir);
  return violations;
}

}  // namespace epr
