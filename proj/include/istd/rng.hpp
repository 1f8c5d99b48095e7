#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace istd {

// PCG32 (XSH-RR variant). A fixed, documented generator so that seeded runs
// reproduce byte-for-byte across platforms; std:: distributions are
// implementation-defined and are never used.
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed = 0x853c49e6748fea9bULL,
                 uint64_t seq = 0xda3e39cb94b95bdbULL) {
    reseed(seed, seq);
  }

  void reseed(uint64_t seed, uint64_t seq = 0xda3e39cb94b95bdbULL) {
    state_ = 0u;
    inc_ = (seq << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Unbiased integer in [0, bound).
  uint32_t next_below(uint32_t bound) {
    uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      uint32_t r = next_u32();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform in [0, 1).
  double next_double() { return next_u32() * (1.0 / 4294967296.0); }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller. Stateless beyond the PCG stream: both
  // uniforms are drawn every call and the second value is discarded, so the
  // serialized state is just (state, inc).
  double normal() {
    double u1 = (next_u32() + 0.5) * (1.0 / 4294967296.0);
    double u2 = (next_u32() + 0.5) * (1.0 / 4294967296.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  uint64_t state() const { return state_; }
  uint64_t inc() const { return inc_; }
  void set_state(uint64_t state, uint64_t inc) {
    state_ = state;
    inc_ = inc;
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
};

// Fisher-Yates with PCG draws; std::shuffle is not reproducible across
// standard libraries.
template <typename T>
void shuffle(std::vector<T>& v, Pcg32& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = rng.next_below(static_cast<uint32_t>(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace istd
