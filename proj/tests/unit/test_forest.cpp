// SPDX-License-Identifier: Apache-2.0

#include <random>

#include "doctest.h"
#include "epr/forest.hpp"
#include "support.hpp"

using namespace epr;

namespace {

double split_impurity(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                      const std::vector<std::size_t>& idx, int k, int f, double thr) {
  std::vector<long> l(static_cast<std::size_t>(k), 0), r(static_cast<std::size_t>(k), 0);
  for (auto i : idx) ++(x[i][static_cast<std::size_t>(f)] <= thr ? l : r)[static_cast<std::size_t>(y[i])];
  long nl = 0, nr = 0;
  for (auto v : l) nl += v;
  for (auto v : r) nr += v;
  return (static_cast<double>(nl) * gini(l) + static_cast<double>(nr) * gini(r)) / static_cast<double>(idx.size());
}

// Walks the grown tree alongside the exhaustive search.
void check_node(const DecisionTree& t, int node, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                const std::vector<std::size_t>& idx, int k, int depth, int max_depth) {
  const auto& n = t.nodes[static_cast<std::size_t>(node)];
  std::vector<long> hist(static_cast<std::size_t>(k), 0);
  for (auto i : idx) ++hist[static_cast<std::size_t>(y[i])];
  CHECK(n.histogram == hist);
  const double parent = gini(hist);
  const auto best = testing::brute_force_split(x, y, idx, k);
  const bool should_split = depth < max_depth && idx.size() >= 2 && parent > 0 && best.found &&
                            best.impurity < parent - 1e-12;
  REQUIRE(n.is_leaf() == !should_split);
  if (n.is_leaf()) return;
  const double got = split_impurity(x, y, idx, k, n.feature, n.threshold);
  CHECK(got == doctest::Approx(best.impurity).epsilon(1e-12));
  if (std::abs(got - best.impurity) > 1e-12) return;
  std::vector<std::size_t> l, r;
  for (auto i : idx) (x[i][static_cast<std::size_t>(n.feature)] <= n.threshold ? l : r).push_back(i);
  check_node(t, n.left, x, y, l, k, depth + 1, max_depth);
  check_node(t, n.right, x, y, r, k, depth + 1, max_depth);
}

}  // namespace

TEST_CASE("gini impurity") {
  CHECK(gini({5, 0}) == 0.0);
  CHECK(gini({2, 2}) == doctest::Approx(0.5));
  CHECK(gini({1, 1, 1}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("trees match exhaustive split search on small instances") {
  std::mt19937_64 g(17);
  int compared_splits = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + static_cast<int>(g() % 26), d = 1 + static_cast<int>(g() % 3), k = 2 + static_cast<int>(g() % 3);
    std::vector<std::vector<double>> x(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& row : x)
      for (auto& v : row) v = static_cast<double>(g() % 7) + (trial % 2 ? 0.25 * static_cast<double>(g() % 4) : 0.0);
    for (auto& v : y) v = static_cast<int>(g() % static_cast<unsigned>(k));
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    ForestConfig cfg;
    cfg.max_features = d;
    cfg.max_depth = 2;
    cfg.bootstrap = false;
    const auto tree = grow_tree(x, y, k, idx, cfg, static_cast<std::uint64_t>(trial));
    CHECK(tree.depth() <= 2);
    check_node(tree, 0, x, y, idx, k, 0, 2);
    compared_splits += static_cast<int>(tree.nodes.size());
  }
  CHECK(compared_splits > 200);
}

TEST_CASE("an unrestricted tree fits consistent data perfectly") {
  std::mt19937_64 g(3);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<double>> x(200, std::vector<double>(4));
  std::vector<int> y(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (auto& v : x[i]) v = d(g);
    y[i] = static_cast<int>(g() % 3);  // arbitrary but consistent: every x distinct
  }
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.max_features = 4;
  const auto f = train_forest(x, y, cfg);
  int ok = 0;
  for (std::size_t i = 0; i < x.size(); ++i) ok += predict_forest(f, x[i]) == y[i];
  CHECK(ok == 200);
}

TEST_CASE("forest separates a noiseless two-class problem") {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> x, xt;
  std::vector<int> y, yt;
  for (int i = 0; i < 400; ++i) {
    std::vector<double> row{u(g), u(g), u(g)};
    const int label = row[0] + 0.5 * row[1] > 0.75 ? 1 : 0;
    (i < 200 ? x : xt).push_back(row);
    (i < 200 ? y : yt).push_back(label);
  }
  ForestConfig cfg;
  cfg.seed = 1;
  const auto f = train_forest(x, y, cfg);
  int ok = 0;
  for (std::size_t i = 0; i < xt.size(); ++i) ok += predict_forest(f, xt[i]) == yt[i];
  CHECK(ok / 200.0 >= 0.95);
}

TEST_CASE("forest determinism, persistence and edge cases") {
  testing::TempDir dir("forest");
  std::vector<std::vector<double>> x{{0.0, 1.0}, {1.0, 0.0}, {0.5, 0.5}, {0.9, 0.2}, {0.1, 0.8}};
  std::vector<int> y{0, 1, 0, 1, 0};
  ForestConfig cfg;
  cfg.n_trees = 7;
  cfg.seed = 3;
  const auto a = train_forest(x, y, cfg, {"lo", "hi"});
  const auto b = train_forest(x, y, cfg, {"lo", "hi"});
  save_forest(a, dir / "f.json");
  const auto c = load_forest(dir / "f.json");
  for (const auto& row : x) {
    CHECK(predict_forest(a, row) == predict_forest(b, row));
    CHECK(predict_forest(a, row) == predict_forest(c, row));
  }
  CHECK(c.class_names == a.class_names);
  CHECK_THROWS_AS(predict_forest(a, {1.0}), ConfigError);

  const auto single = train_forest(x, {1, 1, 1, 1, 1}, cfg, {"lo", "hi"});
  CHECK(predict_forest(single, {0.0, 0.0}) == 1);
  cfg.max_features = 5;
  CHECK_THROWS_AS(train_forest(x, y, cfg), ConfigError);
  CHECK_THROWS_AS(train_forest({}, {}, ForestConfig{}), DataError);
}
