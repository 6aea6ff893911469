#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace inklab {

/// Deterministic random stream: xoshiro256++ seeded through splitmix64.
/// The integer stream is bit-identical on every platform for a given seed;
/// floating-point draws are derived from it with fixed scaling, and normals
/// use a spare-free Box-Muller so the state is fully captured by the four
/// words (checkpoint save/restore round-trips exactly).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  uint64_t next_u64();

  /// Uniform in [0,1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n);

  /// Standard normal draw (Box-Muller, two u64 consumed per call).
  float normal();
  void fill_normal(std::span<float> out, float mean = 0.0f, float stddev = 1.0f);
  void fill_uniform(std::span<float> out, float lo = 0.0f, float hi = 1.0f);

  /// Derive an independent child stream (used to decorrelate sub-tasks).
  Rng split(uint64_t stream);

  /// State as 64 hex chars; parseable by from_state_hex.
  std::string state_hex() const;
  static Rng from_state_hex(const std::string& hex);

 private:
  uint64_t s_[4];
};

}  // namespace inklab
