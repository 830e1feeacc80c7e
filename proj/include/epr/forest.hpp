// SPDX-License-Identifier: Apache-2.0
//
// Random forest of CART trees (Gini impurity, axis-aligned thresholds) for the
// utterance-level decision.

#ifndef EPR_FOREST_HPP_
#define EPR_FOREST_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "epr/common.hpp"

namespace epr {

struct ForestConfig {
  int n_trees = 100;
  int max_features = 0;      // 0: floor(sqrt(d))
  int max_depth = -1;        // -1: unlimited
  int min_samples_split = 2;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  int resolved_max_features(int n_features) const;
  void validate(int n_features) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // samples with x[feature] <= threshold go left
  int left = -1;
  int right = -1;
  std::vector<long> histogram;  // class counts of the training samples reaching this node

  bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int predict(const std::vector<double>& x) const;
  int depth() const;
};

struct Forest {
  std::vector<DecisionTree> trees;
  std::vector<std::string> class_names;
  int n_features = 0;
  std::uint64_t seed = 0;

  int n_classes() const { return static_cast<int>(class_names.size()); }
};

/// Gini impurity of a class-count histogram.
double gini(const std::vector<long>& counts);

/// Grows one CART tree on the given sample indices (repeats allowed).
DecisionTree grow_tree(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int n_classes,
                       const std::vector<std::size_t>& samples, const ForestConfig& cfg, std::uint64_t tree_seed);

/// Trains n_trees trees, each on a bootstrap resample when cfg.bootstrap.
/// A single-class training set yields a forest that always predicts that
/// class (with a warning).
Forest train_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const ForestConfig& cfg,
                    std::vector<std::string> class_names = {});

/// Plurality of the trees' leaf-majority votes; ties go to the lowest class.
int predict_forest(const Forest& f, const std::vector<double>& x);

/// Structured-text (JSON) checkpoint.
void save_forest(const Forest& f, const std::string& path);
Forest load_forest(const std::string& path);

}  // namespace epr

#endif  // EPR_FOREST_HPP_
