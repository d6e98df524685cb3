#pragma once

#include <cmath>
#include <cstdint>

namespace branchfilter {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (Steele/Lea/Flood; Vigna's fixed-increment variant).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based splittable pseudorandom stream built on the SplitMix64
// engine. A stream is addressed by (seed, stream_id): the same address
// replays the same variate sequence regardless of platform load or thread
// count, and distinct stream_ids give statistically independent streams.
// A single stream must not be shared across concurrent callers; hand each
// parallel task its own stream or a split() child.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
      : seed_(seed), stream_(stream_id) {
    state_ = detail::mix64(seed + detail::kGolden);
    state_ = detail::mix64(state_ + stream_id);
  }

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += detail::kGolden);
    return detail::mix64(z);
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on the open interval (0, 1); safe under log().
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the Marsaglia polar method; the companion variate
  // is cached, so draws come in deterministic pairs.
  double normal() noexcept {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_normal_ = v * f;
    has_cached_normal_ = true;
    return u * f;
  }

  // Independent child stream; child indices need not be consecutive.
  RngStream split(std::uint64_t child) const noexcept {
    return RngStream(seed_, detail::mix64(stream_ + detail::kGolden * (child + 1)));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace branchfilter
