// SPDX-License-Identifier: Apache-2.0

#include "epr/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace epr {

EmotionDistribution::EmotionDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw ConfigError("emotion distribution needs at least 2 classes");
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) throw ConfigError("emotion distribution has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw ConfigError("emotion distribution sums to " + std::to_string(sum) + ", expected 1");
}

EmotionDistribution EmotionDistribution::one_hot(std::size_t k, std::size_t cls) {
  if (cls >= k) throw ConfigError("class index " + std::to_string(cls) + " out of range for K=" + std::to_string(k));
  std::vector<double> v(k, 0.0);
  v[cls] = 1.0;
  return EmotionDistribution(std::move(v));
}

EmotionDistribution EmotionDistribution::uniform(std::size_t k) {
  return EmotionDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

EmotionDistribution EmotionDistribution::softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return EmotionDistribution(std::move(p));
}

std::size_t EmotionDistribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

bool EmotionDistribution::is_one_hot() const {
  int ones = 0;
  for (double p : probs_) {
    if (p == 1.0) ++ones;
    else if (p != 0.0) return false;
  }
  return ones == 1;
}

double entropy(const EmotionDistribution& p) {
  double h = 0.0;
  for (double v : p.probs())
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double cross_entropy(const EmotionDistribution& pred, const EmotionDistribution& target) {
  if (pred.size() != target.size()) throw ConfigError("cross_entropy: class count mismatch");
  double ce = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k)
    if (target[k] > 0.0) ce -= target[k] * std::log(std::max(pred[k], kProbFloor));
  return ce;
}

double kl_divergence(const EmotionDistribution& pred, const EmotionDistribution& target) {
  if (pred.size() != target.size()) throw ConfigError("kl_divergence: class count mismatch");
  double kl = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k)
    if (target[k] > 0.0) kl += target[k] * std::log(target[k] / std::max(pred[k], kProbFloor));
  return kl;
}

}  // namespace epr
