#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace qdf {

// Counter-based generator built on the splitmix64 finalizer.  Each draw
// hashes (key, counter), so streams can be split into independent child
// streams without sharing state.  Every sampler in the project goes through
// this type so that runs are reproducible for a fixed seed regardless of
// thread count.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(finalize(seed ^ kSalt)) {}

  // Independent child stream; children with distinct lanes never collide
  // in practice (64-bit hashed keyspace).
  Rng split(uint64_t lane) const { return Rng(key_ ^ finalize(lane + kLane)); }

  uint64_t next_u64() { return finalize(key_ + kGamma * ++counter_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n).
  uint32_t below(uint32_t n) {
    return static_cast<uint32_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform subset of size k from {0..n-1} via partial Fisher-Yates,
  // returned in selection order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
      const uint32_t j = i + below(static_cast<uint32_t>(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ull;
  static constexpr uint64_t kSalt = 0x5851f42d4c957f2dull;
  static constexpr uint64_t kLane = 0xda3e39cb94b95bdbull;

  static uint64_t finalize(uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qdf
