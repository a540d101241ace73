#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace jumpchain {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, stream_id); the block counter walks
/// through the stream. Two streams with different ids never share blocks, so
/// each simulated path gets its own reproducible sequence regardless of
/// which thread runs it.
class PhiloxStream {
 public:
  using result_type = std::uint32_t;

  PhiloxStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream_id),
                static_cast<std::uint32_t>(stream_id >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = (*this)();
    std::uint64_t lo = (*this)();
    return (hi << 32) | lo;
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Exponential with the given rate (> 0).
  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Standard normal via Box-Muller (one value per call, the pair's twin is dropped).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::uint64_t blocks_used() const { return counter_; }

 private:
  void refill() {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                     static_cast<std::uint32_t>(counter_ >> 32), stream_[0],
                                     stream_[1]};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += 0x9E3779B9U;
      key[1] += 0xBB67AE85U;
    }
    buffer_ = ctr;
    pos_ = 0;
    ++counter_;
  }

  static std::array<std::uint32_t, 4> single_round(const std::array<std::uint32_t, 4>& c,
                                                   const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53U) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57U) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
};

}  // namespace jumpchain
