// SPDX-License-Identifier: Apache-2.0
//
// Emotion class distributions and the losses defined over them.

#ifndef EPR_DISTRIBUTION_HPP_
#define EPR_DISTRIBUTION_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "epr/common.hpp"

namespace epr {

/// Probability clamp used inside logarithms of predicted distributions.
inline constexpr double kProbFloor = 1e-12;

/// A K-vector of class probabilities (K >= 2, entries >= 0, summing to 1).
/// Class names are carried by the owning dataset or model, not per vector.
class EmotionDistribution {
 public:
  EmotionDistribution() = default;
  /// Validates the invariants (tolerance 1e-6 on the sum) and throws ConfigError.
  explicit EmotionDistribution(std::vector<double> probs);

  static EmotionDistribution one_hot(std::size_t k, std::size_t cls);
  static EmotionDistribution uniform(std::size_t k);
  /// Softmax of logits with max-subtraction; never produces NaN for finite input.
  static EmotionDistribution softmax(std::span<const double> logits);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  const std::vector<double>& probs() const { return probs_; }

  /// Index of the largest probability; ties go to the lowest index.
  std::size_t argmax() const;
  /// True if exactly one entry is 1 and the rest are 0.
  bool is_one_hot() const;

  friend bool operator==(const EmotionDistribution&, const EmotionDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Shannon entropy in nats.
double entropy(const EmotionDistribution& p);

/// -sum_k target_k ln(pred_k), with pred clamped at kProbFloor.
double cross_entropy(const EmotionDistribution& pred, const EmotionDistribution& target);

/// sum_k target_k ln(target_k / pred_k); terms with target_k = 0 contribute 0.
double kl_divergence(const EmotionDistribution& pred, const EmotionDistribution& target);

}  // namespace epr

#endif  // EPR_DISTRIBUTION_HPP_
