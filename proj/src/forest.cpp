// SPDX-License-Identifier: Apache-2.0

#include "epr/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace epr {

int ForestConfig::resolved_max_features(int n_features) const {
  if (max_features > 0) return max_features;
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n_features)))));
}

void ForestConfig::validate(int n_features) const {
  if (n_trees < 1) throw ConfigError("n_trees must be at least 1");
  if (n_features < 1) throw ConfigError("forest needs at least one feature");
  const int mf = resolved_max_features(n_features);
  if (mf < 1 || mf > n_features)
    throw ConfigError("max_features " + std::to_string(mf) + " outside [1, " + std::to_string(n_features) + "]");
  if (min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
  if (max_depth < -1) throw ConfigError("max_depth must be -1 (unlimited) or nonnegative");
}

double gini(const std::vector<long>& counts) {
  const long n = std::accumulate(counts.begin(), counts.end(), 0L);
  if (n == 0) return 0.0;
  double s = 0.0;
  for (long c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return 1.0 - s / (static_cast<double>(n) * static_cast<double>(n));
}

namespace {

int majority(const std::vector<long>& hist) {
  return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

// n * gini, i.e. n - sum c^2 / n, which keeps children comparable without division by the parent size.
double scaled_gini(const std::vector<long>& counts, long n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (long c : counts) s += static_cast<double>(c) * static_cast<double>(c);
  return static_cast<double>(n) - s / static_cast<double>(n);
}

struct SplitCandidate {
  bool found = false;
  double impurity = 0.0;  // weighted child impurity, scaled by the node size
  int feature = -1;
  double threshold = 0.0;

  bool better_than(const SplitCandidate& o) const {
    if (!o.found) return true;
    if (impurity != o.impurity) return impurity < o.impurity;
    if (feature != o.feature) return feature < o.feature;
    return threshold < o.threshold;
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int n_classes,
              const ForestConfig& cfg, std::uint64_t seed)
      : x_(x), y_(y), k_(n_classes), cfg_(cfg), rng_(seed), n_features_(static_cast<int>(x.front().size())) {}

  DecisionTree build(std::vector<std::size_t> samples) {
    DecisionTree tree;
    grow(tree, std::move(samples), 0);
    return tree;
  }

 private:
  std::vector<long> histogram(const std::vector<std::size_t>& samples) const {
    std::vector<long> h(static_cast<std::size_t>(k_), 0);
    for (std::size_t i : samples) ++h[static_cast<std::size_t>(y_[i])];
    return h;
  }

  // Best threshold on one feature; thresholds are midpoints of consecutive distinct values.
  SplitCandidate best_on_feature(const std::vector<std::size_t>& samples, int f) const {
    std::vector<std::size_t> order = samples;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
    std::vector<long> left(static_cast<std::size_t>(k_), 0), right = histogram(samples);
    const long n = static_cast<long>(order.size());
    SplitCandidate best;
    for (long i = 0; i + 1 < n; ++i) {
      const int c = y_[order[i]];
      ++left[static_cast<std::size_t>(c)];
      --right[static_cast<std::size_t>(c)];
      const double lo = x_[order[i]][f], hi = x_[order[i + 1]][f];
      if (!(lo < hi)) continue;
      double thr = lo + (hi - lo) / 2.0;
      if (!(thr < hi)) thr = lo;
      SplitCandidate cand{true, scaled_gini(left, i + 1) + scaled_gini(right, n - i - 1), f, thr};
      if (cand.better_than(best)) best = cand;
    }
    return best;
  }

  int grow(DecisionTree& tree, std::vector<std::size_t> samples, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[id].histogram = histogram(samples);
    const auto& hist = tree.nodes[id].histogram;
    const long n = static_cast<long>(samples.size());
    const bool pure = std::count_if(hist.begin(), hist.end(), [](long c) { return c > 0; }) <= 1;
    if (pure || n < cfg_.min_samples_split || (cfg_.max_depth >= 0 && depth >= cfg_.max_depth)) return id;

    const double parent = scaled_gini(hist, n);
    std::vector<int> features(static_cast<std::size_t>(n_features_));
    std::iota(features.begin(), features.end(), 0);
    rng_.shuffle(features);
    const int mf = cfg_.resolved_max_features(n_features_);
    // Evaluate max_features candidates; if none lowers the impurity keep drawing
    // further features until one does or all have been tried.
    SplitCandidate best;
    constexpr double kEps = 1e-12;
    for (int i = 0; i < n_features_; ++i) {
      if (i >= mf && best.found && best.impurity < parent - kEps * n) break;
      SplitCandidate c = best_on_feature(samples, features[static_cast<std::size_t>(i)]);
      if (c.found && c.impurity < parent - kEps * n && (!best.found || c.better_than(best))) best = c;
    }
    if (!best.found) return id;

    std::vector<std::size_t> l, r;
    for (std::size_t s : samples) (x_[s][best.feature] <= best.threshold ? l : r).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    tree.nodes[id].feature = best.feature;
    tree.nodes[id].threshold = best.threshold;
    const int li = grow(tree, std::move(l), depth + 1);
    tree.nodes[id].left = li;
    const int ri = grow(tree, std::move(r), depth + 1);
    tree.nodes[id].right = ri;
    return id;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<int>& y_;
  int k_;
  const ForestConfig& cfg_;
  Rng rng_;
  int n_features_;
};

void check_inputs(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int n_classes) {
  if (x.empty()) throw DataError("cannot train a forest on an empty dataset");
  if (x.size() != y.size()) throw ConfigError("feature/label count mismatch");
  const std::size_t d = x.front().size();
  for (const auto& row : x) {
    if (row.size() != d) throw ConfigError("feature vectors have inconsistent lengths");
    for (double v : row)
      if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  for (int label : y)
    if (label < 0 || label >= n_classes) throw ConfigError("label index out of range");
}

}  // namespace

int DecisionTree::predict(const std::vector<double>& x) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return majority(nodes[static_cast<std::size_t>(i)].histogram);
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int mx = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
    d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    mx = std::max(mx, d[i] + 1);
  }
  return mx;
}

DecisionTree grow_tree(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int n_classes,
                       const std::vector<std::size_t>& samples, const ForestConfig& cfg, std::uint64_t tree_seed) {
  check_inputs(x, y, n_classes);
  cfg.validate(static_cast<int>(x.front().size()));
  if (samples.empty()) throw DataError("cannot grow a tree on no samples");
  return TreeBuilder(x, y, n_classes, cfg, tree_seed).build(samples);
}

Forest train_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const ForestConfig& cfg,
                    std::vector<std::string> class_names) {
  if (x.empty()) throw DataError("cannot train a forest on an empty dataset");
  if (class_names.empty()) {
    const int k = std::max(2, *std::max_element(y.begin(), y.end()) + 1);
    for (int c = 0; c < k; ++c) class_names.push_back("class_" + std::to_string(c));
  }
  const int k = static_cast<int>(class_names.size());
  check_inputs(x, y, k);
  const int d = static_cast<int>(x.front().size());
  cfg.validate(d);
  if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); }))
    log_warning("random forest trained on a single class; it will always predict '" +
                class_names[static_cast<std::size_t>(y.front())] + "'");

  Forest forest;
  forest.class_names = std::move(class_names);
  forest.n_features = d;
  forest.seed = cfg.seed;
  const std::size_t n = x.size();
  for (int t = 0; t < cfg.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(t)});
    std::vector<std::size_t> samples(n);
    if (cfg.bootstrap) {
      Rng rng(derive_seed(tree_seed, {0xB007}));
      for (auto& s : samples) s = rng.index(n);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    forest.trees.push_back(TreeBuilder(x, y, k, cfg, tree_seed).build(std::move(samples)));
  }
  return forest;
}

int predict_forest(const Forest& f, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != f.n_features)
    throw ConfigError("feature length " + std::to_string(x.size()) + " does not match the forest's " +
                      std::to_string(f.n_features));
  std::vector<long> votes(static_cast<std::size_t>(f.n_classes()), 0);
  for (const auto& t : f.trees) ++votes[static_cast<std::size_t>(t.predict(x))];
  return majority(votes);
}

void save_forest(const Forest& f, const std::string& path) {
  nlohmann::json j;
  j["format"] = "epr-forest";
  j["version"] = 1;
  j["class_names"] = f.class_names;
  j["n_features"] = f.n_features;
  j["seed"] = f.seed;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& t : f.trees) {
    auto nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
      nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                       {"histogram", n.histogram}});
    trees.push_back(std::move(nodes));
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot write forest checkpoint: " + path);
  os << j.dump(1) << '\n';
}

Forest load_forest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open forest checkpoint: " + path);
  const auto j = nlohmann::json::parse(is);
  if (j.value("format", "") != "epr-forest") throw DataError("not a forest checkpoint: " + path);
  Forest f;
  f.class_names = j.at("class_names").get<std::vector<std::string>>();
  f.n_features = j.at("n_features").get<int>();
  f.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& jt : j.at("trees")) {
    DecisionTree t;
    for (const auto& jn : jt) {
      TreeNode n;
      n.feature = jn.at("feature").get<int>();
      n.threshold = jn.at("threshold").get<double>();
      n.left = jn.at("left").get<int>();
      n.right = jn.at("right").get<int>();
      n.histogram = jn.at("histogram").get<std::vector<long>>();
      t.nodes.push_back(std::move(n));
    }
    f.trees.push_back(std::move(t));
  }
  return f;
}

}  // namespace epr
