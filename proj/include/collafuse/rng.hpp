#pragma once

#include <cmath>
#include <cstdint>

#include "collafuse/types.hpp"

namespace collafuse {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seeded, splittable stream. Draw functions are hand-rolled (no
// std::<distribution> state) so that identical draw sequences are
// bit-identical and streams can be fast-forwarded by a known count:
// normal() always consumes exactly two raw u64 draws.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(splitmix64(seed)) {
    // warm up so nearby seeds decorrelate
    next_u64();
    next_u64();
    consumed_ = 0;
  }

  uint64_t next_u64() {
    // xorshift* on a splitmix-initialized state
    ++consumed_;
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // uniform in [0, 1)
  Scalar uniform() {
    return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;
  }

  // standard normal via Box-Muller (cosine branch only): 2 u64 per draw
  Scalar normal() {
    Scalar u1 = (static_cast<Scalar>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    Scalar u2 = static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;          // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // uniform integer in [lo, hi] inclusive; requires lo <= hi
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  ArrayX normal_array(Index n) {
    ArrayX out(n);
    for (Index i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  // independent child stream; deterministic in (parent seed, tag)
  Rng split(uint64_t tag) const {
    return Rng(splitmix64(seed_ ^ splitmix64(tag ^ 0xA5A5A5A55A5A5A5AULL)));
  }

  // skip n raw u64 draws (used to resume a stream another party advanced)
  void discard(uint64_t n) {
    for (uint64_t i = 0; i < n; ++i) next_u64();
  }

  uint64_t seed() const { return seed_; }
  uint64_t consumed_u64() const { return consumed_; }

 private:
  uint64_t seed_;
  uint64_t state_;
  uint64_t consumed_ = 0;
};

}  // namespace collafuse
