#pragma once

#include <cstdint>
#include <random>

namespace objcomp {

/// Seeded generator with distribution code of our own, so results depend only
/// on the seed and not on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  /// Standard normal (Box-Muller; one value per call).
  double normal();

  /// Independent child stream derived from this generator's seed material.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace objcomp
