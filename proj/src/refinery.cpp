// SPDX-License-Identifier: Apache-2.0

#include "epr/refinery.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace epr {

namespace {
constexpr std::uint64_t kFoldPlanTag = 0xF01D;
}  // namespace

// --- Dataset -------------------------------------------------------------------

std::size_t Dataset::n_segments() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.segments.size();
  return n;
}

void Dataset::validate() const {
  if (class_names.size() < 2) throw DataError("dataset needs at least 2 classes");
  if (utterances.empty()) throw DataError("dataset has no utterances");
  std::unordered_set<std::string> seen;
  for (const auto& u : utterances) {
    if (!seen.insert(u.id).second) throw DataError("duplicate utterance id '" + u.id + "'");
    if (u.label < 0 || u.label >= n_classes())
      throw DataError("utterance '" + u.id + "' has label index " + std::to_string(u.label) + " outside the class table");
    if (u.segments.empty()) throw DataError("utterance '" + u.id + "' has no segments");
    for (std::size_t i = 0; i < u.segments.size(); ++i) {
      const auto& s = u.segments[i];
      if (s.index != static_cast<int>(i) || s.utterance_id != u.id)
        throw DataError("utterance '" + u.id + "' has misnumbered segment " + std::to_string(i));
      if (!s.values.allFinite()) throw DataError("utterance '" + u.id + "' has non-finite features");
    }
  }
}

std::vector<FoldItem> Dataset::fold_items() const {
  std::vector<FoldItem> items;
  items.reserve(utterances.size());
  for (const auto& u : utterances) items.push_back({u.id, u.label, u.speaker});
  return items;
}

// --- EmotionProfile / modes ----------------------------------------------------------

EmotionDistribution EmotionProfile::column(int i) const {
  const auto c = values.col(i);
  return EmotionDistribution(std::vector<double>(c.data(), c.data() + c.size()));
}

RefineryMode parse_mode(const std::string& name) {
  if (name == "none") return RefineryMode::kNone;
  if (name == "sEPR") return RefineryMode::kStandard;
  if (name == "pEPR") return RefineryMode::kPseudoOneHot;
  if (name == "hard-dynamic") return RefineryMode::kHardDynamic;
  if (name == "soft-static") return RefineryMode::kSoftStatic;
  throw ConfigError("unknown refinery mode '" + name + "' (expected none, sEPR, pEPR, hard-dynamic, soft-static)");
}

std::string mode_name(RefineryMode mode) {
  switch (mode) {
    case RefineryMode::kNone: return "none";
    case RefineryMode::kStandard: return "sEPR";
    case RefineryMode::kPseudoOneHot: return "pEPR";
    case RefineryMode::kHardDynamic: return "hard-dynamic";
    case RefineryMode::kSoftStatic: return "soft-static";
  }
  return "none";
}

const EmotionDistribution& RefineryGeneration::target(const std::string& utterance_id, int segment_index) const {
  const auto it = targets.find(utterance_id);
  if (it == targets.end() || segment_index < 0 || segment_index >= static_cast<int>(it->second.size()))
    throw DataError("no target for segment " + std::to_string(segment_index) + " of '" + utterance_id + "'");
  return it->second[static_cast<std::size_t>(segment_index)];
}

void RefineryGeneration::validate(const Dataset& ds) const {
  if (targets.size() != ds.utterances.size()) throw DataError("target store does not cover the dataset");
  for (const auto& u : ds.utterances) {
    const auto it = targets.find(u.id);
    if (it == targets.end() || it->second.size() != u.segments.size())
      throw DataError("targets for '" + u.id + "' do not match its segment count");
    for (const auto& t : it->second)
      if (t.size() != static_cast<std::size_t>(ds.n_classes())) throw DataError("target class count mismatch");
  }
}

void RefineryConfig::validate() const {
  if (generations < 1) throw ConfigError("generations must be at least 1");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (mode == RefineryMode::kNone && generations != 1)
    throw ConfigError("mode 'none' runs a single generation; set generations to 1");
  train.validate();
}

// --- Label rules ----------------------------------------------------------------

std::vector<EmotionDistribution> initial_labels(int utterance_label, int n_segments, int n_classes) {
  if (utterance_label < 0 || utterance_label >= n_classes)
    throw ConfigError("invalid class index " + std::to_string(utterance_label) + " for K=" + std::to_string(n_classes));
  if (n_segments < 1) throw ConfigError("an utterance needs at least one segment");
  return std::vector<EmotionDistribution>(
      static_cast<std::size_t>(n_segments),
      EmotionDistribution::one_hot(static_cast<std::size_t>(n_classes), static_cast<std::size_t>(utterance_label)));
}

EmotionProfile build_ep(const std::vector<EmotionDistribution>& predictions, const std::string& utterance_id,
                        int generation) {
  if (predictions.empty()) throw ConfigError("cannot build an emotion profile from no predictions");
  const std::size_t k = predictions.front().size();
  EmotionProfile ep;
  ep.utterance_id = utterance_id;
  ep.generation = generation;
  ep.values.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(predictions.size()));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != k) throw ConfigError("predictions have mixed class counts");
    for (std::size_t c = 0; c < k; ++c)
      ep.values(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = predictions[i][c];
  }
  return ep;
}

EmotionDistribution refine_standard(const EmotionDistribution& pred) { return pred; }

EmotionDistribution combine_with_hard(const EmotionDistribution& pred, const EmotionDistribution& hard) {
  if (!hard.is_one_hot()) throw ConfigError("combine_with_hard: hard label is not one-hot");
  if (pred.size() != hard.size()) throw ConfigError("combine_with_hard: class count mismatch");
  std::vector<double> out(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) out[k] = (pred[k] + hard[k]) / 2.0;
  return EmotionDistribution(std::move(out));
}

EmotionDistribution hard_dynamic_label(const EmotionDistribution& pred) {
  return EmotionDistribution::one_hot(pred.size(), pred.argmax());
}

EmotionDistribution soft_static_label(const std::vector<EmotionDistribution>& preds) {
  if (preds.empty()) throw ConfigError("soft_static_label: empty utterance");
  std::vector<double> mean(preds.front().size(), 0.0);
  for (const auto& p : preds) {
    if (p.size() != mean.size()) throw ConfigError("soft_static_label: mixed class counts");
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k];
  }
  for (double& m : mean) m /= static_cast<double>(preds.size());
  return EmotionDistribution(std::move(mean));
}

double mean_ep_entropy(const EpMap& eps) {
  if (eps.empty()) throw ConfigError("mean_ep_entropy: no emotion profiles");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& [id, ep] : eps)
    for (int i = 0; i < ep.n_segments(); ++i) {
      total += entropy(ep.column(i));
      ++n;
    }
  return total / static_cast<double>(n);
}

// --- Generation loop -------------------------------------------------------------

RefineryGeneration initial_generation(const Dataset& ds) {
  RefineryGeneration gen;
  gen.t = 1;
  gen.mode = RefineryMode::kNone;
  for (const auto& u : ds.utterances)
    gen.targets[u.id] = initial_labels(u.label, static_cast<int>(u.segments.size()), ds.n_classes());
  return gen;
}

RefineryGeneration next_generation(const Dataset& ds, const EpMap& previous, RefineryMode mode, int t) {
  if (mode == RefineryMode::kNone) throw ConfigError("mode 'none' has no refinement step");
  RefineryGeneration gen;
  gen.t = t;
  gen.mode = mode;
  for (const auto& u : ds.utterances) {
    const auto it = previous.find(u.id);
    if (it == previous.end()) throw DataError("no emotion profile for utterance '" + u.id + "'");
    const EmotionProfile& ep = it->second;
    if (ep.n_segments() != static_cast<int>(u.segments.size()))
      throw DataError("emotion profile of '" + u.id + "' has the wrong segment count");
    std::vector<EmotionDistribution> cols;
    for (int i = 0; i < ep.n_segments(); ++i) cols.push_back(ep.column(i));
    std::vector<EmotionDistribution>& out = gen.targets[u.id];
    switch (mode) {
      case RefineryMode::kStandard:
        for (const auto& c : cols) out.push_back(refine_standard(c));
        break;
      case RefineryMode::kPseudoOneHot: {
        const auto hard = EmotionDistribution::one_hot(static_cast<std::size_t>(ds.n_classes()),
                                                       static_cast<std::size_t>(u.label));
        for (const auto& c : cols) out.push_back(combine_with_hard(c, hard));
        break;
      }
      case RefineryMode::kHardDynamic:
        for (const auto& c : cols) out.push_back(hard_dynamic_label(c));
        break;
      case RefineryMode::kSoftStatic:
        out.assign(cols.size(), soft_static_label(cols));
        break;
      case RefineryMode::kNone:
        break;
    }
  }
  return gen;
}

EpMap generate_eps_foldout(const Dataset& ds, const RefineryGeneration& gen, const RefineryConfig& cfg,
                           const FoldPlan& plan, std::vector<FoldAudit>* audits, const RefineryHooks* hooks) {
  cfg.validate();
  gen.validate(ds);
  if (plan.assignment.size() != ds.utterances.size()) throw ConfigError("fold plan does not match the dataset");
  EpMap eps;
  for (int fold = 0; fold < plan.k; ++fold) {
    std::vector<Segment> train_segments;
    std::vector<EmotionDistribution> train_targets;
    std::vector<int> class_count(static_cast<std::size_t>(ds.n_classes()), 0);
    std::vector<std::size_t> held_out;
    for (std::size_t u = 0; u < ds.utterances.size(); ++u) {
      const Utterance& utt = ds.utterances[u];
      if (plan.assignment[u] == fold) {
        held_out.push_back(u);
        continue;
      }
      ++class_count[static_cast<std::size_t>(utt.label)];
      const auto& tg = gen.targets.at(utt.id);
      for (std::size_t i = 0; i < utt.segments.size(); ++i) {
        train_segments.push_back(utt.segments[i]);
        train_targets.push_back(tg[i]);
      }
    }
    if (held_out.empty()) continue;
    for (int c = 0; c < ds.n_classes(); ++c)
      if (class_count[static_cast<std::size_t>(c)] == 0)
        log_warning("generation " + std::to_string(gen.t) + ", fold " + std::to_string(fold) +
                    ": no training utterances of class '" + ds.class_names[static_cast<std::size_t>(c)] + "'");

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(gen.t), static_cast<std::uint64_t>(fold)});
    Model model = train_segment_classifier(train_segments, train_targets, tc, ds.class_names);
    model.generation = gen.t;
    if (hooks && hooks->on_model) hooks->on_model(gen.t, fold, model);

    FoldAudit audit;
    audit.generation = gen.t;
    audit.fold = fold;
    audit.model_seed = tc.seed;
    {
      std::set<std::string> ids;
      for (const auto& s : train_segments) ids.insert(s.utterance_id);
      audit.training_utterances.assign(ids.begin(), ids.end());
    }
    for (std::size_t u : held_out) {
      const Utterance& utt = ds.utterances[u];
      eps[utt.id] = build_ep(predict_batch(model, utt.segments), utt.id, gen.t);
      audit.predicted_utterances.push_back(utt.id);
    }
    log_info("generation " + std::to_string(gen.t) + " fold " + std::to_string(fold + 1) + "/" +
             std::to_string(plan.k) + " done (" + std::to_string(train_segments.size()) + " training segments)");
    if (hooks && hooks->on_fold) hooks->on_fold(audit);
    if (audits) audits->push_back(std::move(audit));
  }
  return eps;
}

namespace {

GenerationStats generation_stats(const Dataset& ds, const RefineryGeneration& gen, const EpMap& eps) {
  GenerationStats st;
  st.t = gen.t;
  st.mean_entropy = mean_ep_entropy(eps);
  double min_mass = 1.0, ent = 0.0;
  std::size_t n = 0;
  for (const auto& u : ds.utterances)
    for (const auto& t : gen.targets.at(u.id)) {
      min_mass = std::min(min_mass, t[static_cast<std::size_t>(u.label)]);
      ent += entropy(t);
      ++n;
    }
  st.min_target_label_mass = min_mass;
  st.mean_target_entropy = ent / static_cast<double>(n);
  return st;
}

}  // namespace

RefineryResult run_refinery(const Dataset& ds, const RefineryConfig& cfg, const RefineryHooks& hooks) {
  cfg.validate();
  ds.validate();
  RefineryResult result;
  result.plan = kfold_split(ds.fold_items(), cfg.folds, derive_seed(cfg.seed, {kFoldPlanTag}), cfg.grouping);

  RefineryGeneration gen = initial_generation(ds);
  for (int t = 1; t <= cfg.generations; ++t) {
    if (t > 1) gen = next_generation(ds, result.eps.back(), cfg.mode, t);
    std::optional<EpMap> eps;
    if (hooks.load_generation) eps = hooks.load_generation(t);
    const bool resumed = eps.has_value();
    if (!resumed) eps = generate_eps_foldout(ds, gen, cfg, result.plan, &result.audits, &hooks);
    GenerationStats st = generation_stats(ds, gen, *eps);
    st.resumed = resumed;
    st.models_trained = resumed ? 0 : cfg.folds;
    if (hooks.on_generation) hooks.on_generation(t, *eps, gen);
    result.stats.push_back(st);
    result.targets.push_back(gen);
    result.eps.push_back(std::move(*eps));
  }
  return result;
}

std::vector<std::string> audit_fold_purity(const RefineryResult& result, const Dataset& ds) {
  std::vector<std::string> violations;
  std::map<int, std::unordered_map<std::string, int>> produced;  // generation -> utterance -> producing models
  for (const auto& a : result.audits) {
    const std::unordered_set<std::string> trained(a.training_utterances.begin(), a.training_utterances.end());
    for (const auto& id : a.predicted_utterances) {
      ++produced[a.generation][id];
      if (trained.count(id))
        violations.push_back("generation " + std::to_string(a.generation) + ", fold " + std::to_string(a.fold) +
                             ": utterance '" + id + "' was in the training set of the model that produced its EP");
    }
  }
  for (const auto& st : result.stats) {
    if (st.resumed) continue;
    for (const auto& u : ds.utterances) {
      const int n = produced[st.t].count(u.id) ? produced[st.t][u.id] : 0;
      if (n != 1)
        violations.push_back("generation " + std::to_string(st.t) + ": utterance '" + u.id + "' has " +
                             std::to_string(n) + " producing models");
    }
  }
  return violations;
}

}  // namespace epr
