#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace tunekit::detail {

// Deterministic draws on top of mt19937_64. The engine sequence is fixed by
// the standard for a given seed; the <random> distributions are not, so the
// mappings to bounded ints and unit doubles are done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, bound). bound must be >= 1.
  std::uint64_t bounded(std::uint64_t bound) {
    const std::uint64_t zone =
        (std::numeric_limits<std::uint64_t>::max() / bound) * bound;
    std::uint64_t r = next_u64();
    while (r >= zone) r = next_u64();
    return r % bound;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tunekit::detail
