// SPDX-License-Identifier: Apache-2.0
//
// Fold planning and utterance-level metrics.

#ifndef EPR_EVAL_HPP_
#define EPR_EVAL_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epr/common.hpp"

namespace epr {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes = 0);

  void add(int truth, int predicted);
  int n_classes() const { return n_; }
  long count(int truth, int predicted) const { return counts_[static_cast<std::size_t>(truth * n_ + predicted)]; }
  long row_total(int truth) const;
  long total() const;
  long trace() const;
  std::vector<std::vector<long>> rows() const;
  static ConfusionMatrix from_rows(const std::vector<std::vector<long>>& rows);

 private:
  int n_;
  std::vector<long> counts_;
};

/// trace / total. Throws DataError on an empty matrix.
double weighted_accuracy(const ConfusionMatrix& cm);
/// Mean per-class recall over rows with at least one sample; empty rows are
/// skipped with a warning. Throws DataError when every row is empty.
double unweighted_accuracy(const ConfusionMatrix& cm);

struct FoldItem {
  std::string utterance_id;
  int label = 0;
  std::string speaker;
};

enum class FoldGrouping { kUtterance, kSpeaker };

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  FoldGrouping grouping = FoldGrouping::kUtterance;
  std::vector<int> assignment;  // parallel to the input items

  std::vector<std::size_t> members(int fold) const;
};

/// Seeded, class-stratified partition into k folds. Utterance grouping deals
/// the shuffled utterances of each class round-robin over the folds, carrying
/// the fold cursor across classes so fold sizes differ by at most one. Speaker
/// grouping keeps every utterance of a speaker in one fold.
FoldPlan kfold_split(const std::vector<FoldItem>& items, int k, std::uint64_t seed,
                     FoldGrouping grouping = FoldGrouping::kUtterance);

FoldGrouping parse_grouping(const std::string& name);
std::string grouping_name(FoldGrouping g);

}  // namespace epr

#endif  // EPR_EVAL_HPP_
