#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "drmww/errors.hpp"

namespace drmww {

inline constexpr double kProbabilityFloor = 1e-12;

inline double clamp_probability(double p) noexcept {
  if (p < kProbabilityFloor) return kProbabilityFloor;
  if (p > 1.0 - kProbabilityFloor) return 1.0 - kProbabilityFloor;
  return p;
}

namespace detail {
inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x))
    throw DomainError(std::string(what) + ": non-finite argument");
}
}  // namespace detail

/// Inverse logit, clamped to [1e-12, 1 - 1e-12].
inline double expit(double x) {
  detail::require_finite(x, "expit");
  double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  return clamp_probability(p);
}

/// Derivative of the (unclamped) inverse logit.
inline double expit_derivative(double x) {
  double e = std::exp(-std::abs(x));
  return e / ((1.0 + e) * (1.0 + e));
}

/// Standard normal CDF via erfc, clamped like expit.
inline double std_normal_cdf(double x) {
  detail::require_finite(x, "std_normal_cdf");
  return clamp_probability(0.5 * std::erfc(-x * M_SQRT1_2));
}

inline double std_normal_pdf(double x) noexcept {
  constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

/// Neumaier compensated accumulator. Sums are order-dependent only through
/// the order of `add` calls.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

//---------------------------------------------------------------------------//
// Philox4x32-10 counter-based generator.
//---------------------------------------------------------------------------//

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += w0;
      key[1] += w1;
    }
    std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
    std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
    auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    auto lo0 = static_cast<std::uint32_t>(p0);
    auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

/**
 * Reproducible random stream keyed by (seed, stream_id).
 *
 * The seed is the Philox key and the stream id occupies the upper half of
 * the 128-bit counter, so every (seed, stream_id) pair owns a disjoint
 * 2^64-block sequence. Draws depend only on the key and the number of
 * previous draws, never on which thread consumes them.
 *
 * Satisfies UniformRandomBitGenerator.
 */
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed), stream_id_(stream_id) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (buffered_ == 0) refill();
    --buffered_;
    return buffer_[buffered_];
  }

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  void refill() noexcept {
    PhiloxCounter ctr = {static_cast<std::uint32_t>(block_),
                         static_cast<std::uint32_t>(block_ >> 32),
                         static_cast<std::uint32_t>(stream_id_),
                         static_cast<std::uint32_t>(stream_id_ >> 32)};
    PhiloxKey key = {static_cast<std::uint32_t>(seed_),
                     static_cast<std::uint32_t>(seed_ >> 32)};
    auto out = philox4x32_10(ctr, key);
    ++block_;
    // Consumed from the back: index 1 first, then 0.
    buffer_[1] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[0] = (std::uint64_t{out[3]} << 32) | out[2];
    buffered_ = 2;
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  std::optional<double> spare_normal_;

  friend double sample_standard_normal(RngStream& stream);
};

/// Marsaglia polar method; the second variate of each accepted pair is
/// cached in the stream.
inline double sample_standard_normal(RngStream& stream) {
  if (stream.spare_normal_) {
    double z = *stream.spare_normal_;
    stream.spare_normal_.reset();
    return z;
  }
  double u, v, s;
  do {
    u = 2.0 * stream.uniform() - 1.0;
    v = 2.0 * stream.uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double scale = std::sqrt(-2.0 * std::log(s) / s);
  stream.spare_normal_ = v * scale;
  return u * scale;
}

inline double sample_normal(double mean, double variance, RngStream& stream) {
  if (!std::isfinite(mean) || !std::isfinite(variance) || variance < 0.0)
    throw DomainError("sample_normal: variance must be finite and >= 0");
  if (variance == 0.0) return mean;
  return mean + std::sqrt(variance) * sample_standard_normal(stream);
}

inline int sample_bernoulli(double p, RngStream& stream) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DomainError("sample_bernoulli: p must lie in [0, 1]");
  if (p == 0.0) return 0;
  if (p == 1.0) return 1;
  return stream.uniform() < p ? 1 : 0;
}

/// (C - 1) * sqrt(variance / 2) with C ~ chi-square(1): mean 0, the given
/// variance, skewness sqrt(8).
inline double sample_centered_chisq(double variance, RngStream& stream) {
  if (!std::isfinite(variance) || variance <= 0.0)
    throw DomainError("sample_centered_chisq: variance must be > 0");
  double z = sample_standard_normal(stream);
  return (z * z - 1.0) * std::sqrt(variance / 2.0);
}

}  // namespace drmww
