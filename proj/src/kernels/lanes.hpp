#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>

namespace simmp::kernels::detail {

inline constexpr std::size_t kLanes = 8;
using Lanes = double __attribute__((vector_size(kLanes * sizeof(double))));
using LaneBits = std::int64_t __attribute__((vector_size(kLanes * sizeof(double))));

inline Lanes load_lanes(const double* p) {
  Lanes v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_lanes(double* p, Lanes v) { std::memcpy(p, &v, sizeof v); }

// exp(x) for x <= 0. Cody-Waite reduction to |r| <= ln2/2 and a degree-13 Taylor
// polynomial; within a few ulp of std::exp. Results below the normal range flush to 0.
inline Lanes exp_nonpositive(Lanes x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  // Adding 1.5 * 2^52 rounds to the nearest integer, which then sits in the low bits.
  constexpr double kShifter = 6755399441055744.0;
  constexpr std::int64_t kShifterBits = 0x4338000000000000LL;
  const Lanes floor = Lanes{} - 708.0;
  const LaneBits keep = x >= floor;
  x = x < floor ? floor : x;
  const Lanes shifted = x * kLog2e + kShifter;
  const Lanes k = shifted - kShifter;
  const Lanes r = (x - k * kLn2Hi) - k * kLn2Lo;
  Lanes p = Lanes{} + 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const LaneBits scale = ((__builtin_bit_cast(LaneBits, shifted) - kShifterBits) + 1023) << 52;
  const Lanes out = p * __builtin_bit_cast(Lanes, scale);
  return __builtin_bit_cast(Lanes, __builtin_bit_cast(LaneBits, out) & keep);
}

// y[j] = exp(x[j] - shift) for j < n, every element through the same lane arithmetic.
inline void exp_shifted(const double* x, double* y, std::size_t n, double shift) {
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) store_lanes(y + j, exp_nonpositive(load_lanes(x + j) - shift));
  if (j < n) {
    double tail[kLanes] = {};
    std::memcpy(tail, x + j, (n - j) * sizeof(double));
    const Lanes v = exp_nonpositive(load_lanes(tail) - shift);
    std::memcpy(y + j, &v, (n - j) * sizeof(double));
  }
}

// Sum with kLanes interleaved partial sums, combined in a fixed order.
inline double lane_sum(const double* x, std::size_t n) {
  Lanes acc{};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) acc += load_lanes(x + j);
  double total = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) total += acc[l];
  for (; j < n; ++j) total += x[j];
  return total;
}

inline double lane_dot(const double* a, const double* b, std::size_t n) {
  Lanes acc{};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) acc += load_lanes(a + j) * load_lanes(b + j);
  double total = 0.0;
  for (std::size_t l = 0; l < kLanes; ++l) total += acc[l];
  for (; j < n; ++j) total += a[j] * b[j];
  return total;
}

inline double lane_max(const double* x, std::size_t n) {
  double mx = x[0];
  std::size_t j = 0;
  if (n >= kLanes) {
    Lanes acc = load_lanes(x);
    for (j = kLanes; j + kLanes <= n; j += kLanes) {
      const Lanes v = load_lanes(x + j);
      acc = v > acc ? v : acc;
    }
    for (std::size_t l = 0; l < kLanes; ++l) mx = acc[l] > mx ? acc[l] : mx;
  }
  for (; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
  return mx;
}

}  // namespace simmp::kernels::detail
