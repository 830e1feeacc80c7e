// SPDX-License-Identifier: Apache-2.0

#include "epr/representation.hpp"

#include <algorithm>
#include <cmath>

namespace epr {

std::vector<Statistic> default_statistics() {
  return {Statistic::kMean, Statistic::kStd, Statistic::kMin, Statistic::kMax, Statistic::kRange};
}

Statistic parse_statistic(const std::string& name) {
  if (name == "mean") return Statistic::kMean;
  if (name == "std") return Statistic::kStd;
  if (name == "min") return Statistic::kMin;
  if (name == "max") return Statistic::kMax;
  if (name == "range") return Statistic::kRange;
  throw ConfigError("unknown statistic '" + name + "'");
}

std::string statistic_name(Statistic s) {
  switch (s) {
    case Statistic::kMean: return "mean";
    case Statistic::kStd: return "std";
    case Statistic::kMin: return "min";
    case Statistic::kMax: return "max";
    case Statistic::kRange: return "range";
  }
  return "mean";
}

UtteranceRepresentation ep_statistics(const EmotionProfile& ep, const std::vector<Statistic>& stats) {
  if (ep.n_segments() < 1) throw ConfigError("emotion profile has no segments");
  if (stats.empty()) throw ConfigError("no statistics selected");
  const int k = ep.n_classes();
  const double n = ep.n_segments();
  std::vector<double> mean(k), sd(k), mn(k), mx(k);
  for (int r = 0; r < k; ++r) {
    const auto row = ep.values.row(r);
    mn[r] = row.minCoeff();
    mx[r] = row.maxCoeff();
    // Rounding can leave the sum outside [min, max]; a constant row must give its value exactly.
    mean[r] = mn[r] == mx[r] ? mn[r] : std::clamp(row.sum() / n, mn[r], mx[r]);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < row.size(); ++i) ss += (row[i] - mean[r]) * (row[i] - mean[r]);
    sd[r] = std::sqrt(ss / n);
  }
  UtteranceRepresentation rep;
  rep.utterance_id = ep.utterance_id;
  rep.generation = ep.generation;
  rep.features.reserve(stats.size() * static_cast<std::size_t>(k));
  for (Statistic s : stats)
    for (int r = 0; r < k; ++r) {
      switch (s) {
        case Statistic::kMean: rep.features.push_back(mean[r]); break;
        case Statistic::kStd: rep.features.push_back(sd[r]); break;
        case Statistic::kMin: rep.features.push_back(mn[r]); break;
        case Statistic::kMax: rep.features.push_back(mx[r]); break;
        case Statistic::kRange: rep.features.push_back(mx[r] - mn[r]); break;
      }
    }
  return rep;
}

}  // namespace epr
