#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace simmp::kernels::detail {

// Two source taps and the weight of the upper one for one output coordinate.
struct Tap {
  std::size_t lo = 0, hi = 0;
  double frac = 0.0;
};

inline std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    taps[o].lo = lo;
    taps[o].hi = std::min(lo + 1, in - 1);
    taps[o].frac = src - static_cast<double>(lo);
  }
  return taps;
}

}  // namespace simmp::kernels::detail
