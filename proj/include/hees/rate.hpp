#pragma once

#include <cmath>
#include <stdexcept>

namespace hees {

inline constexpr double kLog2E = 1.4426950408889634;

namespace detail {
inline void check_rate_args(int m, double p_tx, int n) {
  if (m < 1) throw std::domain_error("antenna count must be >= 1");
  if (m > n) throw std::domain_error("antenna count exceeds array size");
  if (!(p_tx >= 0.0)) throw std::domain_error("transmit power must be >= 0");
}
}  // namespace detail

/// Expected per-antenna gain of picking the M strongest of N unit-mean
/// Rayleigh-faded antennas: 1 + ln(N/M). Equals 1 at M = N.
inline double selection_gain(int n, int m) {
  return 1.0 + std::log(static_cast<double>(n) / static_cast<double>(m));
}

/// Mean achievable rate of M-of-N transmit antenna selection under the
/// channel-hardening approximation, bits/s/Hz. Noise power is normalized to
/// one, so p_tx enters as an SNR-scaled quantity.
inline double mean_rate(int m, double p_tx, int n) {
  detail::check_rate_args(m, p_tx, n);
  return std::log2(1.0 + selection_gain(n, m) * p_tx * m);
}

/// Variance of the same hardened rate, (bits/s/Hz)^2.
inline double rate_variance(int m, double p_tx, int n) {
  detail::check_rate_args(m, p_tx, n);
  const double denom = 1.0 + selection_gain(n, m) * p_tx * m;
  const double num = kLog2E * p_tx;
  return num * num * m * (2.0 - static_cast<double>(m) / n) / (denom * denom);
}

}  // namespace hees
