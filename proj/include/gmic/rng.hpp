#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gmic/common.hpp"

namespace gmic {

inline u64 splitmix64(u64 x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// variate transforms below are hand-rolled so results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(u64 seed) : seed_(seed), eng_(splitmix64(seed)) {}

  u64 seed() const { return seed_; }
  u64 next_u64() { return eng_(); }

  // Independent child stream; stable under reordering of fork calls.
  Rng fork(u64 stream) const { return Rng(splitmix64(seed_ ^ (stream + 0x51ed270b7a4ef52bull))); }

  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }  // [0,1)

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  i64 uniform_int(i64 n) {
    u64 bound = u64(n);
    u64 threshold = (~bound + 1) % bound;  // 2^64 mod n
    for (;;) {
      u64 r = next_u64();
      if (r >= threshold) return i64(r % bound);
    }
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2;
    while (u1 == 0.0) u1 = uniform();
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double log_uniform10(double lo_exp, double hi_exp) { return std::pow(10.0, uniform(lo_exp, hi_exp)); }
  double log_uniform_e(double lo_exp, double hi_exp) { return std::exp(uniform(lo_exp, hi_exp)); }

  template <typename V>
  void shuffle(std::vector<V>& v) {
    for (i64 i = i64(v.size()) - 1; i > 0; --i) {
      i64 j = uniform_int(i + 1);
      std::swap(v[size_t(i)], v[size_t(j)]);
    }
  }

  // k distinct indices from [0, n), order arbitrary but deterministic
  std::vector<i64> sample_without_replacement(i64 n, i64 k) {
    std::vector<i64> idx(static_cast<size_t>(n));
    for (i64 i = 0; i < n; ++i) idx[size_t(i)] = i;
    for (i64 i = 0; i < k; ++i) {
      i64 j = i + uniform_int(n - i);
      std::swap(idx[size_t(i)], idx[size_t(j)]);
    }
    idx.resize(size_t(k));
    return idx;
  }

 private:
  u64 seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gmic
