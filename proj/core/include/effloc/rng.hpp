#pragma once

#include <cstdint>

namespace effloc {

/// Deterministic, platform-independent random generator (xoshiro256++ state,
/// seeded through splitmix64). Standard-library distributions are avoided on
/// purpose: their output is not specified bit-exactly, and every consumer in
/// this project needs identical streams across platforms and runs.
///
/// Independent substreams are derived with `fork`, so shuffling one epoch or
/// jittering one sample never disturbs any other stream. That property is
/// what makes checkpoint-resume bit-identical to an uninterrupted run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Next raw 64-bit value.
  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller (one variate per call, no cached state).
  double normal();

  /// Normal(0, sigma) truncated to [-2 sigma, 2 sigma] by rejection.
  double truncated_normal(double sigma);

  /// Independent substream identified by (tag, a, b). Equal arguments always
  /// give an identical stream regardless of what this generator produced.
  Rng fork(std::uint64_t tag, std::uint64_t a = 0, std::uint64_t b = 0) const;

  /// Stateless mix of up to three words into one; used for index hashing.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b = 0,
                           std::uint64_t c = 0);

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
};

}  // namespace effloc
