#pragma once

#include <cstdint>
#include <random>

#include "simmp/metrics.hpp"
#include "simmp/tensor.hpp"

namespace testutil {

inline simmp::Tensor uniform(simmp::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  simmp::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

inline simmp::LabelMap random_labels(std::size_t h, std::size_t w, std::size_t classes, std::mt19937_64& rng) {
  simmp::LabelMap m(h, w);
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(d(rng));
  return m;
}

// Blobby masks: a few random rectangles of random classes, so boundaries are not pure noise.
inline simmp::LabelMap random_blobs(std::size_t h, std::size_t w, std::size_t classes, std::mt19937_64& rng) {
  simmp::LabelMap m(h, w);
  std::uniform_int_distribution<std::size_t> cls(1, classes - 1), ys(0, h - 1), xs(0, w - 1);
  std::uniform_int_distribution<int> count(0, 4);
  for (int r = count(rng); r > 0; --r) {
    std::size_t y0 = ys(rng), y1 = ys(rng), x0 = xs(rng), x1 = xs(rng);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    const auto c = static_cast<std::uint8_t>(cls(rng));
    for (std::size_t y = y0; y <= y1; ++y)
      for (std::size_t x = x0; x <= x1; ++x) m.at(y, x) = c;
  }
  return m;
}

}  // namespace testutil
