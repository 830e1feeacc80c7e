// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "epr/representation.hpp"
#include "support.hpp"

using namespace epr;

TEST_CASE("EP statistics against direct formulas") {
  std::mt19937_64 g(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 5, n = 1 + trial % 7;
    std::vector<EmotionDistribution> cols;
    for (int i = 0; i < n; ++i) cols.emplace_back(testing::random_probs(g, static_cast<std::size_t>(k)));
    const auto ep = build_ep(cols, "u");
    const auto r = ep_statistics(ep);
    REQUIRE(r.features.size() == static_cast<std::size_t>(5 * k));
    for (int c = 0; c < k; ++c) {
      double sum = 0.0, lo = 1.0, hi = 0.0;
      for (int i = 0; i < n; ++i) {
        sum += cols[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        lo = std::min(lo, cols[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
        hi = std::max(hi, cols[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
      }
      const double mean = sum / n;
      double var = 0.0;
      for (int i = 0; i < n; ++i) var += std::pow(cols[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] - mean, 2);
      const auto f = [&](int stat) { return r.features[static_cast<std::size_t>(stat * k + c)]; };
      CHECK(f(0) == doctest::Approx(mean).epsilon(1e-12));
      CHECK(f(1) == doctest::Approx(std::sqrt(var / n)).epsilon(1e-9));
      CHECK(f(2) == lo);
      CHECK(f(3) == hi);
      CHECK(f(4) == doctest::Approx(hi - lo).epsilon(1e-12));
    }
  }
}

TEST_CASE("a constant EP has zero spread") {
  const auto ep = build_ep({EmotionDistribution({0.7, 0.3}), EmotionDistribution({0.7, 0.3}),
                            EmotionDistribution({0.7, 0.3})});
  const auto r = ep_statistics(ep);
  CHECK(r.features == std::vector<double>{0.7, 0.3, 0.0, 0.0, 0.7, 0.3, 0.7, 0.3, 0.0, 0.0});
}

TEST_CASE("statistic selection and names") {
  const auto ep = build_ep({EmotionDistribution({0.2, 0.8}), EmotionDistribution({0.6, 0.4})});
  const auto r = ep_statistics(ep, {Statistic::kMax, Statistic::kMin});
  CHECK(r.features == std::vector<double>{0.6, 0.8, 0.2, 0.4});
  for (auto s : default_statistics()) CHECK(parse_statistic(statistic_name(s)) == s);
  CHECK_THROWS_AS(parse_statistic("median"), ConfigError);
  CHECK_THROWS_AS(ep_statistics(ep, {}), ConfigError);
}
