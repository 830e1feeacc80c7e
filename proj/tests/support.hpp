// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations and fixtures shared by the tests.
// The oracles deliberately avoid the library's own helpers.

#ifndef EPR_TESTS_SUPPORT_HPP_
#define EPR_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "epr/common.hpp"
#include "epr/features.hpp"
#include "epr/forest.hpp"

namespace epr::testing {

/// Log-Mel energies by a direct O(N^2) DFT and explicitly built triangles.
inline Matrix direct_dft_log_mel(const std::vector<double>& x, int rate, int win_ms, int hop_ms, int n_fft,
                                 int n_mels) {
  const int win = win_ms * rate / 1000, hop = hop_ms * rate / 1000;
  const int frames = static_cast<int>((x.size() - win) / hop) + 1;
  const int bins = n_fft / 2 + 1;
  const auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  const auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double top = mel(rate / 2.0);
  std::vector<double> edge(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edge[i] = hz(top * i / (n_mels + 1));
  Matrix fb = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    double peak = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = k * static_cast<double>(rate) / n_fft;
      double w = 0.0;
      if (f > edge[m] && f <= edge[m + 1])
        w = (f - edge[m]) / (edge[m + 1] - edge[m]);
      else if (f > edge[m + 1] && f < edge[m + 2])
        w = (edge[m + 2] - f) / (edge[m + 2] - edge[m + 1]);
      fb(m, k) = w;
      peak = std::max(peak, w);
    }
    fb.row(m) /= peak;
  }
  Matrix out(n_mels, frames);
  for (int t = 0; t < frames; ++t) {
    std::vector<double> frame(n_fft, 0.0);
    for (int n = 0; n < win; ++n)
      frame[n] = x[static_cast<std::size_t>(t * hop + n)] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win));
    Vector power(bins);
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < n_fft; ++n) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(k) * n) % n_fft) / n_fft;
        re += frame[n] * std::cos(a);
        im += frame[n] * std::sin(a);
      }
      power[k] = re * re + im * im;
    }
    const Vector e = fb * power;
    for (int m = 0; m < n_mels; ++m) out(m, t) = std::log(std::max(e[m], 1e-10));
  }
  return out;
}

/// Largest |a - b| / max(|b|, 1) over all entries.
inline double max_relative_error(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / std::max(std::abs(b.data()[i]), 1.0));
  return worst;
}

inline std::vector<double> random_probs(std::mt19937_64& g, std::size_t k, double floor = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& v : p) s += (v = u(g) + floor);
  for (auto& v : p) v /= s;
  return p;
}

struct SplitChoice {
  bool found = false;
  double impurity = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

/// Exhaustive CART split search: every feature, every midpoint between
/// consecutive distinct values, weighted Gini of the children.
inline SplitChoice brute_force_split(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                     const std::vector<std::size_t>& idx, int k) {
  const auto gini_of = [&](const std::vector<std::size_t>& s) {
    if (s.empty()) return 0.0;
    std::vector<double> c(static_cast<std::size_t>(k), 0.0);
    for (auto i : s) c[static_cast<std::size_t>(y[i])] += 1.0;
    double g = 1.0;
    for (double v : c) g -= (v / s.size()) * (v / s.size());
    return g;
  };
  SplitChoice best;
  const std::size_t d = x.front().size();
  for (std::size_t f = 0; f < d; ++f) {
    std::vector<double> vals;
    for (auto i : idx) vals.push_back(x[i][f]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t j = 0; j + 1 < vals.size(); ++j) {
      const double thr = (vals[j] + vals[j + 1]) / 2.0;
      std::vector<std::size_t> l, r;
      for (auto i : idx) (x[i][f] <= thr ? l : r).push_back(i);
      const double imp = (l.size() * gini_of(l) + r.size() * gini_of(r)) / idx.size();
      if (!best.found || imp < best.impurity - 1e-12) best = {true, imp, static_cast<int>(f), thr};
    }
  }
  return best;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("epr_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace epr::testing

#endif  // EPR_TESTS_SUPPORT_HPP_
