#pragma once

#include <cstdint>
#include <string_view>

namespace cyclemorph {

// Deterministic generator used for every random draw in the library.
//
// The standard <random> distributions are implementation-defined, so relying
// on them would break the byte-identical reproducibility contract across
// toolchains. This is xoshiro256** seeded through splitmix64, with uniform
// doubles built directly from the high 53 bits. Not cryptographic.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform01();

  // Uniform in [lo, hi). Requires lo <= hi (equal is allowed and returns lo).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n). Uses rejection sampling, so it is unbiased.
  // Requires n > 0.
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::uint64_t s_[4];
};

// Derives an independent substream from a master seed and a stream name.
// Streams are decoupled: the number of draws taken from one never shifts the
// values produced by another, which is what keeps, e.g., parameter init
// stable when the per-epoch sample count changes.
Rng named_stream(std::uint64_t master_seed, std::string_view name);

}  // namespace cyclemorph
