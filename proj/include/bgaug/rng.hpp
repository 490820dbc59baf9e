#pragma once

#include <cmath>
#include <cstdint>

namespace bgaug {

// splitmix64 finalizer. Used both as the generator step and to mix
// (seed, epoch, id, tag) tuples into independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Small deterministic generator. Identical sequences on every platform,
// which is what the reproducibility contract leans on. Not crypto.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // unbiased integer in [0, n), n must be > 0
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // standard normal via Box-Muller; consumes exactly two draws
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t state_;
};

// Stream tags keep per-sample randomness independent across uses. Every
// consumer of randomness derives its own stream; none share a sequential
// generator, so worker count and iteration order cannot change the draws.
enum class Stream : std::uint64_t {
  kQueryView = 1,
  kKeyView = 2,
  kBgDecision = 3,
  kNegDecision = 4,
  kCorruptionQuery = 5,
  kCorruptionKey = 6,
  kShuffle = 7,
  kDatasetTrain = 8,
  kDatasetTest = 9,
  kSplitPairing = 10,
  kParamInit = 11,
  kQueueWarmup = 12,
  kGradCheck = 13,
  kProbe = 14,
};

inline Rng derive_rng(std::uint64_t global_seed, std::uint64_t epoch,
                      std::uint64_t sample_id, Stream tag) {
  std::uint64_t h = mix64(global_seed ^ 0x8f1bbcdc4e6d9a31ull);
  h = mix64(h ^ (epoch + 0x9e3779b97f4a7c15ull));
  h = mix64(h ^ (sample_id + 0x9e3779b97f4a7c15ull));
  h = mix64(h ^ (static_cast<std::uint64_t>(tag) + 0x9e3779b97f4a7c15ull));
  return Rng(h);
}

}  // namespace bgaug
