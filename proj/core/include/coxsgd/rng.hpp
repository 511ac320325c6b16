#ifndef COXSGD_RNG_HPP
#define COXSGD_RNG_HPP

#include <array>
#include <cstdint>
#include <limits>

namespace coxsgd {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The output is a pure function of (seed, stream, counter), so any draw can
/// be reproduced without replaying the ones before it. Streams are 64-bit tags
/// occupying the upper half of the 128-bit counter; independent replications
/// or draw indices get distinct streams.
///
/// All distribution helpers below are implemented here rather than through
/// <random> distributions, whose algorithms differ across standard libraries.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t counter = 0) noexcept;

  /// One 10-round Philox bijection of `counter` under `key`.
  static Block block(Block counter, std::array<std::uint32_t, 2> key) noexcept;

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Exponential with the given rate.
  double exponential(double rate = 1.0) noexcept;
  /// +1 or -1 with equal probability.
  double rademacher() noexcept;

  /// Generator on a different stream with the same seed, counter reset.
  [[nodiscard]] Philox4x32 split(std::uint64_t stream) const noexcept { return Philox4x32(seed_, stream); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  /// Number of 128-bit blocks consumed so far.
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

using Rng = Philox4x32;

/// Mixes several integers into one stream tag (splitmix64 finaliser chain).
std::uint64_t stream_tag(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

}  // namespace coxsgd

#endif  // COXSGD_RNG_HPP
