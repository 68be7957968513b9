#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace waveir {

/// Deterministic generator with named sub-streams. All sampling (uniform,
/// normal, shuffle) is implemented here rather than with <random>
/// distributions, whose output is implementation-defined; artifacts produced
/// from the same seed must be byte-identical across platforms and thread
/// counts. xoshiro256++ core, splitmix64 seeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Child stream derived from (state-at-construction seed, name, index).
  /// Streams with distinct (name, index) are independent for our purposes;
  /// deriving is stateless, so call order does not matter.
  Rng stream(std::string_view name, std::uint64_t index = 0) const;

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller; two uniforms per draw, no cached state.
  double normal();

  /// Uniform integer on [0, n), rejection sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates.
  void shuffle(std::vector<int>& v);

  /// 0..n-1 shuffled.
  std::vector<int> permutation(int n);

 private:
  Rng() = default;
  std::uint64_t s_[4];
  std::uint64_t seed_;
};

}  // namespace waveir
