// SPDX-License-Identifier: Apache-2.0
//
// Shared error types, seeded random streams and logging for the EPR library.

#ifndef EPR_COMMON_HPP_
#define EPR_COMMON_HPP_

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace epr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (bad spec, inconsistent sizes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unusable input data (short audio, corrupt files, unknown ids).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss or parameters).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Mixes a master seed with a sequence of integers (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts);

/// Deterministic random stream. All draws are defined here rather than via
/// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal (Box-Muller, second value cached).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class LogLevel { kSilent = 0, kWarning = 1, kInfo = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();
void log_warning(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace epr

#endif  // EPR_COMMON_HPP_
