#pragma once

#include <array>
#include <cstdint>

namespace isoex::random {

// splitmix64 finalizer applied to x + golden gamma. Used both as the seed
// expander and as the per-tree stream splitter.
std::uint64_t mix(std::uint64_t x);

// Sub-seed for stream i of a run seeded with `seed`.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t i) { return mix(seed ^ i); }

// xoshiro256** seeded by four successive splitmix64 outputs. Output is fully
// specified by the seed, independent of platform and standard library.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();
  // Uniform on [0, 1) with 53 random bits.
  double uniform01();
  // Uniform on the open interval (lo, hi); requires a representable value strictly inside.
  double uniform_open(double lo, double hi);
  // Uniform integer in [0, n), n > 0, by rejection.
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace isoex::random
