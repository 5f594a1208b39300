#pragma once

#include <cstdint>
#include <random>

namespace cbamc {

/// SplitMix64 finalizer. Used to derive independent stream seeds from
/// structured keys, e.g. (master seed, split kind, class, index).
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Folds `value` into `seed`: splitmix64(seed ^ value).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t value) {
  return splitmix64(seed ^ value);
}

/// Seeded random stream. The engine is std::mt19937_64; the samplers are
/// written out explicitly so that streams do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on the closed interval [lo, hi].
  int uniform_int(int lo, int hi);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace cbamc
