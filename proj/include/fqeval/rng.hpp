#pragma once

#include <cstdint>
#include <span>

// Seeded random streams with cheap derived sub-streams. A stream's identity
// is the pair (seed, stream id); sub-streams are derived from the identity,
// never from the consumed state, so episode k of a dataset or replicate b of
// a bootstrap always sees the same draws regardless of evaluation order.

namespace fqeval {

/// SplitMix64 mixing step, also used to combine stream tags.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::uint64_t uniform_below(std::uint64_t n);
  /// Standard normal (Box-Muller; two uniforms per draw).
  double normal();
  /// Exponential with the given rate.
  double exponential(double rate);
  /// Gamma(shape, scale), Marsaglia-Tsang.
  double gamma(double shape, double scale);
  /// Index i with probability p[i]; p must be a probability vector.
  int categorical(std::span<const double> p);

  /// Stream for sub-task k, derived from this stream's identity.
  Rng substream(std::uint64_t k) const { return Rng(seed_, mix64(stream_, k)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4];
};

}  // namespace fqeval
