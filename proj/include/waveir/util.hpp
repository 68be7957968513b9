#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace waveir {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runs fn(0..count-1) on up to `threads` workers. Work items must be
/// independent; results land in caller-owned slots indexed by item, so the
/// outcome is identical for any thread count.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn);

/// FNV-1a over arbitrary bytes; used for seed-stream derivation and for
/// content digests in serialized artifacts.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull);

inline bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

inline int next_pow2(int v) {
  int p = 1;
  while (p < v) p <<= 1;
  return p;
}

/// floor(log2(v)) for v >= 1.
inline int ilog2(int v) {
  int j = 0;
  while ((1 << (j + 1)) <= v) ++j;
  return j;
}

}  // namespace waveir
