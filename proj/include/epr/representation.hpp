// SPDX-License-Identifier: Apache-2.0
//
// Fixed-length utterance representations from emotion profiles.

#ifndef EPR_REPRESENTATION_HPP_
#define EPR_REPRESENTATION_HPP_

#include <string>
#include <vector>

#include "epr/refinery.hpp"

namespace epr {

enum class Statistic { kMean, kStd, kMin, kMax, kRange };

/// Default functional set, in output order.
std::vector<Statistic> default_statistics();
Statistic parse_statistic(const std::string& name);
std::string statistic_name(Statistic s);

struct UtteranceRepresentation {
  std::vector<double> features;  // statistic-major: all K means, then all K stds, ...
  std::string utterance_id;
  int generation = 1;
};

/// Per EP row: mean, population standard deviation, min, max and range over
/// the N columns, concatenated statistic-major (length 5K by default).
UtteranceRepresentation ep_statistics(const EmotionProfile& ep,
                                      const std::vector<Statistic>& stats = default_statistics());

}  // namespace epr

#endif  // EPR_REPRESENTATION_HPP_
