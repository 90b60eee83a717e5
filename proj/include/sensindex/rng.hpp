#pragma once

#include <cstdint>
#include <random>

namespace sensindex {

// splitmix64 finalizer (Steele, Lea & Flood's SplittableRandom mixer; the
// standard way to expand/whiten a 64-bit seed). Used only to derive stream
// seeds so that (master_seed, counter) pairs map to decorrelated engines.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-derived random stream: replicate r of an experiment with master
// seed s uses Stream(s, r). Parallel schedules cannot change which numbers a
// replicate sees, so every report is reproducible regardless of worker count.
class Stream {
 public:
  Stream(std::uint64_t master_seed, std::uint64_t counter)
      : engine_(splitmix64(splitmix64(master_seed) ^ splitmix64(~counter))) {}

  // Uniform on [0, 1), closed at 0 (0 is a valid draw; models must accept
  // eps = 0 because the decomposition convention fixes eps_0 = 0).
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sensindex
