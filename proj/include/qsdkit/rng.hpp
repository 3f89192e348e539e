#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qsdkit {

// Random stream used by every sampler. The engine is std::mt19937_64, whose
// output sequence is fixed by the standard; the conversions to uniform and
// exponential variates are done here (not via <random> distributions) so
// that a seed reproduces the same tours on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  // Independent stream for replicate `index` of a run seeded with `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed + index); }

  std::uint64_t seed() const noexcept { return seed_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Exp(rate) variate; rate must be positive.
  double exponential(double rate) noexcept { return -std::log1p(-uniform()) / rate; }

  std::uint64_t next_u64() noexcept { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace qsdkit
