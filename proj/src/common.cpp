// SPDX-License-Identifier: Apache-2.0

#include "epr/common.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>

namespace epr {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::atomic<int> g_log_level{static_cast<int>(LogLevel::kWarning)};
std::mutex g_log_mutex;

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = master;
  std::uint64_t out = splitmix64(h);
  for (std::uint64_t p : parts) {
    h ^= out + 0x632BE59BD9B4E019ULL + p;
    out = splitmix64(h);
  }
  return out;
}

// xoshiro256** seeded through splitmix64.
Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ConfigError("Rng::index: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void set_log_level(LogLevel level) { g_log_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_log_level.load()); }

void log_warning(const std::string& msg) {
  if (g_log_level.load() < static_cast<int>(LogLevel::kWarning)) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "WARNING: " << msg << '\n';
}

void log_info(const std::string& msg) {
  if (g_log_level.load() < static_cast<int>(LogLevel::kInfo)) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "LOG: " << msg << '\n';
}

}  // namespace epr
