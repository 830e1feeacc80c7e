// SPDX-License-Identifier: Apache-2.0

#include "epr/eval.hpp"

#include <algorithm>
#include <numeric>

namespace epr {

ConfusionMatrix::ConfusionMatrix(int n_classes)
    : n_(n_classes), counts_(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0) {
  if (n_classes < 0) throw ConfigError("negative class count");
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= n_ || predicted < 0 || predicted >= n_)
    throw ConfigError("confusion matrix index out of range");
  ++counts_[static_cast<std::size_t>(truth * n_ + predicted)];
}

long ConfusionMatrix::row_total(int truth) const {
  long s = 0;
  for (int p = 0; p < n_; ++p) s += count(truth, p);
  return s;
}

long ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

long ConfusionMatrix::trace() const {
  long s = 0;
  for (int c = 0; c < n_; ++c) s += count(c, c);
  return s;
}

std::vector<std::vector<long>> ConfusionMatrix::rows() const {
  std::vector<std::vector<long>> out(n_, std::vector<long>(n_));
  for (int t = 0; t < n_; ++t)
    for (int p = 0; p < n_; ++p) out[t][p] = count(t, p);
  return out;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<long>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != rows.size()) throw ConfigError("confusion matrix must be square");
    for (std::size_t p = 0; p < rows.size(); ++p) {
      if (rows[t][p] < 0) throw ConfigError("confusion matrix counts must be nonnegative");
      cm.counts_[t * rows.size() + p] = rows[t][p];
    }
  }
  return cm;
}

double weighted_accuracy(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total <= 0) throw DataError("weighted accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double unweighted_accuracy(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < cm.n_classes(); ++c) {
    const long n = cm.row_total(c);
    if (n == 0) {
      log_warning("unweighted accuracy: class " + std::to_string(c) + " has no samples; excluded");
      continue;
    }
    sum += static_cast<double>(cm.count(c, c)) / static_cast<double>(n);
    ++used;
  }
  if (used == 0) throw DataError("unweighted accuracy: every class row is empty");
  return sum / used;
}

std::vector<std::size_t> FoldPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i)
    if (assignment[i] == fold) out.push_back(i);
  return out;
}

FoldPlan kfold_split(const std::vector<FoldItem>& items, int k, std::uint64_t seed, FoldGrouping grouping) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.grouping = grouping;
  plan.assignment.assign(items.size(), -1);
  Rng rng(seed);

  if (grouping == FoldGrouping::kUtterance) {
    if (items.size() < static_cast<std::size_t>(k))
      throw ConfigError("fold count " + std::to_string(k) + " exceeds the " + std::to_string(items.size()) +
                        " utterances available");
    int n_classes = 0;
    for (const auto& it : items) n_classes = std::max(n_classes, it.label + 1);
    int cursor = 0;
    for (int c = 0; c < n_classes; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].label == c) members.push_back(i);
      rng.shuffle(members);
      for (std::size_t i : members) {
        plan.assignment[i] = cursor;
        cursor = (cursor + 1) % k;
      }
    }
    return plan;
  }

  // Speaker grouping: largest groups first onto the currently smallest fold.
  std::vector<std::string> speakers;
  for (const auto& it : items)
    if (std::find(speakers.begin(), speakers.end(), it.speaker) == speakers.end()) speakers.push_back(it.speaker);
  if (speakers.size() < static_cast<std::size_t>(k))
    throw ConfigError("fold count " + std::to_string(k) + " exceeds the " + std::to_string(speakers.size()) +
                      " speaker groups available");
  rng.shuffle(speakers);
  std::vector<std::size_t> sizes(speakers.size(), 0);
  for (const auto& it : items)
    ++sizes[static_cast<std::size_t>(std::find(speakers.begin(), speakers.end(), it.speaker) - speakers.begin())];
  std::vector<std::size_t> order(speakers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  std::vector<std::size_t> load(static_cast<std::size_t>(k), 0);
  for (std::size_t g : order) {
    const auto fold = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
    load[static_cast<std::size_t>(fold)] += sizes[g];
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i].speaker == speakers[g]) plan.assignment[i] = fold;
  }
  return plan;
}

FoldGrouping parse_grouping(const std::string& name) {
  if (name == "utterance") return FoldGrouping::kUtterance;
  if (name == "speaker") return FoldGrouping::kSpeaker;
  throw ConfigError("unknown fold grouping '" + name + "' (expected utterance or speaker)");
}

std::string grouping_name(FoldGrouping g) { return g == FoldGrouping::kSpeaker ? "speaker" : "utterance"; }

}  // namespace epr
