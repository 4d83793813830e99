#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace balancekit {

// Counter-based SplitMix64 stream. Streams derived from distinct
// (seed, id...) key tuples are independent, so adding consumers never
// perturbs draws made elsewhere and replicates can run on any worker.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(fold(0x9e3779b97f4a7c15ULL, seed)) {}

  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
      : state_(fold(0x9e3779b97f4a7c15ULL, seed)) {
    for (auto id : ids) state_ = fold(state_, id);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on [0,1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // One unsigned integer in [0, n). Modulo bias is negligible for n << 2^64.
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double chi_squared1() {
    const double z = normal();
    return z * z;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // 1-based category draw from a row of probabilities summing to one.
  template <typename Derived>
  int categorical(const Eigen::DenseBase<Derived>& probs) {
    const double u = uniform01();
    double acc = 0.0;
    const int m = static_cast<int>(probs.size());
    for (int j = 0; j < m; ++j) {
      acc += probs(j);
      if (u < acc) return j + 1;
    }
    return m;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t fold(std::uint64_t state, std::uint64_t id) {
    return mix(state ^ (id + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2)));
  }

  std::uint64_t state_;
};

}  // namespace balancekit
