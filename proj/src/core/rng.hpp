#pragma once

#include <cstdint>

namespace fsr {

// Counter-free splitmix64 stream. Every stochastic choice in the engine
// (weight init, shuffles, augmentation draws, texture synthesis) runs off
// one of these so results are bit-reproducible across runs and platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  bool next_bernoulli(double p) { return next_double() < p; }

 private:
  std::uint64_t state_;
};

// Mixes independent seed components into a fresh stream seed, so that
// e.g. (policy seed, sample index, epoch) streams never collide.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  SplitMix64 m(a);
  std::uint64_t s = m.next_u64();
  s ^= SplitMix64(b ^ 0xa0761d6478bd642fULL).next_u64();
  s = SplitMix64(s).next_u64();
  s ^= SplitMix64(c ^ 0xe7037ed1a0b428dbULL).next_u64();
  return SplitMix64(s).next_u64();
}

}  // namespace fsr
