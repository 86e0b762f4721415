#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace dsf {

// Deterministic, platform-independent RNG. std::mt19937 distributions are
// implementation-defined, so all randomness in the project goes through this.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // splitmix warmup so nearby seeds diverge
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  // Box-Muller
  double normal(double mu = 0.0, double sigma = 1.0) {
    if (have_cached_) {
      have_cached_ = false;
      return mu + sigma * cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return mu + sigma * r * std::cos(a);
  }

  // k distinct values from [0, n) \ {exclude}; exclude < 0 disables exclusion
  std::vector<int> sample_without_replacement(int n, int k, int exclude = -1) {
    std::vector<int> pool;
    pool.reserve(n);
    for (int i = 0; i < n; ++i)
      if (i != exclude) pool.push_back(i);
    if (k > static_cast<int>(pool.size())) k = static_cast<int>(pool.size());
    for (int i = 0; i < k; ++i) {
      int j = i + uniform_int(static_cast<int>(pool.size()) - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  // stable child-seed derivation for parallel streams
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace dsf
