// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "epr/network.hpp"
#include "epr/trainer.hpp"
#include "support.hpp"

using namespace epr;

namespace {

std::vector<Segment> random_segments(int n, int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<Segment> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)].values = Matrix(rows, cols);
    for (Eigen::Index j = 0; j < out[static_cast<std::size_t>(i)].values.size(); ++j)
      out[static_cast<std::size_t>(i)].values.data()[j] = d(g);
    out[static_cast<std::size_t>(i)].utterance_id = "u" + std::to_string(i);
  }
  return out;
}

std::vector<EmotionDistribution> random_targets(int n, int k, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<EmotionDistribution> t;
  for (int i = 0; i < n; ++i) t.emplace_back(testing::random_probs(g, static_cast<std::size_t>(k)));
  return t;
}

std::vector<const Segment*> pointers(const std::vector<Segment>& s) {
  std::vector<const Segment*> p;
  for (const auto& x : s) p.push_back(&x);
  return p;
}

}  // namespace

TEST_CASE("architecture descriptors round-trip") {
  for (const std::string d : {"compact", "vgg-e", "conv:8,8,8,8", "conv:4x2,6;dense:10,7"}) {
    const auto a = Architecture::parse(d);
    CHECK(Architecture::parse(a.describe()) == a);
  }
  CHECK(Architecture::parse("compact").blocks.size() == 4u);
  CHECK(Architecture::parse("vgg-e").dense == std::vector<int>{4096, 4096});
  CHECK_THROWS_AS(Architecture::parse("resnet"), ConfigError);
  CHECK_THROWS_AS(Architecture::parse("conv:"), ConfigError);
}

TEST_CASE("too many pooling stages for the input is a configuration error") {
  CHECK_THROWS_AS(Network(Architecture::parse("conv:2,2,2,2,2,2"), 3, 16, 16), ConfigError);
}

TEST_CASE("analytic gradients match central finite differences") {
  const Network net(Architecture::parse("conv:3,4;dense:6"), 3, 8, 8);
  REQUIRE(net.param_count() <= 5000u);
  const auto params0 = net.init_params(21);
  const auto segs = random_segments(3, 8, 8, 4);
  const auto targets = random_targets(3, 3, 8);
  const Matrix x = net.pack(pointers(segs));
  for (LossKind kind : {LossKind::kCrossEntropy, LossKind::kKlDivergence}) {
    std::vector<double> grad;
    net.loss_and_gradient(params0, x, targets, kind, grad);
    std::vector<double> p = params0;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double h = 1e-5;
      p[i] = params0[i] + h;
      const double up = net.loss(p, x, targets, kind);
      p[i] = params0[i] - h;
      const double down = net.loss(p, x, targets, kind);
      p[i] = params0[i];
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("KL and cross-entropy give the same parameter gradient") {
  const Network net(Architecture::parse("conv:4,4"), 5, 16, 8);
  const auto params = net.init_params(3);
  const auto segs = random_segments(6, 16, 8, 9);
  const auto targets = random_targets(6, 5, 10);
  const Matrix x = net.pack(pointers(segs));
  std::vector<double> g_ce, g_kl;
  const double ce = net.loss_and_gradient(params, x, targets, LossKind::kCrossEntropy, g_ce);
  const double kl = net.loss_and_gradient(params, x, targets, LossKind::kKlDivergence, g_kl);
  double h = 0.0;
  for (const auto& t : targets) h += entropy(t);
  CHECK(std::abs(kl - (ce - h / 6.0)) < 1e-9);
  double worst = 0.0;
  for (std::size_t i = 0; i < g_ce.size(); ++i) worst = std::max(worst, std::abs(g_ce[i] - g_kl[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("initialization is seeded and fan-in scaled") {
  const Network net(Architecture::compact(), 4);
  const auto a = net.init_params(1), b = net.init_params(1), c = net.init_params(2);
  CHECK(a == b);
  CHECK(a != c);
  // First conv: 9 * 16 weights with std sqrt(2/9).
  double s = 0.0;
  const auto& l0 = net.layers().front();
  for (std::size_t i = 0; i < 144; ++i) s += a[l0.weight_offset + i] * a[l0.weight_offset + i];
  CHECK(std::sqrt(s / 144.0) == doctest::Approx(std::sqrt(2.0 / 9.0)).epsilon(0.25));
}

TEST_CASE("model checkpoints load bit-exactly") {
  testing::TempDir dir("model");
  Model m;
  m.arch = Architecture::parse("conv:2,2");
  m.n_classes = 3;
  m.class_names = {"a", "b", "c"};
  m.generation = 2;
  m.seed = 99;
  m.input_rows = 8;
  m.input_cols = 8;
  m.params = m.network().init_params(5);
  m.params[0] = 0.1 + 0.2;  // not exactly representable in short decimal form
  save_model(m, dir / "m.eprm");
  const Model back = load_model(dir / "m.eprm");
  CHECK(back.params == m.params);
  CHECK(back.class_names == m.class_names);
  CHECK(back.generation == 2);
  CHECK(back.seed == 99u);
  CHECK(back.arch == m.arch);
  const auto segs = random_segments(2, 8, 8, 1);
  CHECK(predict(back, segs[0]) == predict(m, segs[0]));
  {
    std::ofstream os(dir / "bad.eprm");
    os << "garbage";
  }
  CHECK_THROWS_AS(load_model(dir / "bad.eprm"), DataError);
}

TEST_CASE("batched prediction equals one-at-a-time prediction") {
  Model m;
  m.arch = Architecture::parse("conv:3,3");
  m.n_classes = 4;
  m.input_rows = 8;
  m.input_cols = 8;
  m.params = m.network().init_params(7);
  const auto segs = random_segments(5, 8, 8, 3);
  const auto batch = predict_batch(m, segs);
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(batch[i][c] == doctest::Approx(predict(m, segs[i])[c]).epsilon(1e-12));
}
