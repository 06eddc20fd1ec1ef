#include "simmp/harness/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "simmp/errors.hpp"

namespace simmp {

namespace {

constexpr double kBackgroundLevel = 0.12;
constexpr double kBandLow = 0.3, kBandHigh = 0.9;
constexpr double kBandJitter = 0.04;
constexpr double kTextureAmplitude = 0.03;
constexpr double kPresence = 0.75;
constexpr std::size_t kMaxShapes = 3;
constexpr int kPlacementAttempts = 200;

enum class ShapeKind { disk, rectangle, annulus, triangle };

struct Shape2D {
  ShapeKind kind;
  double cy, cx;
  double a, b;  // radius/inner radius, half extents, or circumradius/rotation
  std::uint8_t label;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    switch (kind) {
      case ShapeKind::disk:
        return dy * dy + dx * dx <= a * a;
      case ShapeKind::rectangle:
        return std::abs(dy) <= a && std::abs(dx) <= b;
      case ShapeKind::annulus: {
        const double r2 = dy * dy + dx * dx;
        return r2 <= a * a && r2 >= b * b;
      }
      case ShapeKind::triangle: {
        // Inside all three edges of an equilateral triangle with circumradius a, rotated by b.
        for (int k = 0; k < 3; ++k) {
          const double t = b + 2.0 * std::numbers::pi * k / 3.0 + std::numbers::pi / 3.0;
          if (dx * std::cos(t) + dy * std::sin(t) > 0.5 * a) return false;
        }
        return true;
      }
    }
    return false;
  }

  double reach() const { return kind == ShapeKind::rectangle ? std::hypot(a, b) : a; }
};

double band_center(std::size_t label, std::size_t classes) {
  if (classes == 2) return 0.6;
  return kBandLow + (kBandHigh - kBandLow) * static_cast<double>(label - 1) / static_cast<double>(classes - 2);
}

Shape2D draw_shape(std::uint8_t label, double scale, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Shape2D s{static_cast<ShapeKind>((label - 1) % 4), 0, 0, 0, 0, label};
  switch (s.kind) {
    case ShapeKind::disk:
      s.a = uni(9.0, 15.0) * scale;
      break;
    case ShapeKind::rectangle:
      s.a = uni(8.0, 14.0) * scale;
      s.b = uni(8.0, 14.0) * scale;
      break;
    case ShapeKind::annulus:
      s.a = uni(12.0, 17.0) * scale;
      s.b = s.a * uni(0.4, 0.6);
      break;
    case ShapeKind::triangle:
      s.a = uni(16.0, 21.0) * scale;
      s.b = uni(0.0, 2.0 * std::numbers::pi);
      break;
  }
  const double r = s.reach();
  s.cy = uni(std::min(r, h / 2.0), std::max(h - r, h / 2.0));
  s.cx = uni(std::min(r, w / 2.0), std::max(w - r, w / 2.0));
  return s;
}

bool overlaps(const Shape2D& s, const std::vector<Shape2D>& placed) {
  for (const auto& p : placed) {
    if (std::hypot(s.cy - p.cy, s.cx - p.cx) < s.reach() + p.reach() + 1.0) return true;
  }
  return false;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

SyntheticSample render(const std::vector<Shape2D>& shapes, std::size_t h, std::size_t w, std::size_t classes,
                       std::mt19937_64& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  struct Texture {
    double level, fy, fx, phase;
  };
  std::vector<Texture> tex;
  for (const auto& s : shapes) {
    tex.push_back({band_center(s.label, classes) + uni(-kBandJitter, kBandJitter), uni(0.2, 0.8), uni(0.2, 0.8),
                   uni(0.0, 2.0 * std::numbers::pi)});
  }
  const double background = kBackgroundLevel + uni(-kBandJitter, kBandJitter);
  std::normal_distribution<double> noise(0.0, kImageNoise);

  SyntheticSample out{Tensor({h, w, 1}), LabelMap(h, w)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = background;
      for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (!shapes[i].contains(static_cast<double>(y), static_cast<double>(x))) continue;
        const auto& t = tex[i];
        v = t.level + kTextureAmplitude * std::sin(t.fy * y + t.fx * x + t.phase);
        out.mask.at(y, x) = shapes[i].label;
      }
      out.image[y * w + x] = quantize(v + noise(rng));
    }
  return out;
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic_dataset(std::size_t n, std::size_t height, std::size_t width,
                                                        std::size_t classes, std::uint64_t seed) {
  if (classes < kMinClasses || classes > kMaxClasses) {
    throw ContractError("generate_synthetic_dataset: classes must be in [" + std::to_string(kMinClasses) + ", " +
                        std::to_string(kMaxClasses) + "], got " + std::to_string(classes));
  }
  if (n == 0 || height == 0 || width == 0) throw ContractError("generate_synthetic_dataset: empty request");
  const double scale = static_cast<double>(std::min(height, width)) / 64.0;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution present(kPresence);

  std::vector<SyntheticSample> samples;
  samples.reserve(n);
  while (samples.size() < n) {
    std::vector<std::uint8_t> labels;
    for (std::size_t c = 1; c < classes; ++c)
      if (present(rng)) labels.push_back(static_cast<std::uint8_t>(c));
    if (labels.empty()) continue;
    while (labels.size() > kMaxShapes) {
      labels.erase(labels.begin() + static_cast<std::ptrdiff_t>(
                                        std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)));
    }
    // Redraw the whole layout until every chosen shape fits without overlap.
    const double crowd = 1.0 - 0.1 * static_cast<double>(labels.size() - 1);
    std::vector<Shape2D> shapes;
    for (int layout = 0; layout < kPlacementAttempts && shapes.size() < labels.size(); ++layout) {
      shapes.clear();
      for (auto label : labels) {
        Shape2D s = draw_shape(label, scale * crowd, height, width, rng);
        if (overlaps(s, shapes)) break;
        shapes.push_back(s);
      }
    }
    if (shapes.size() < labels.size()) continue;
    samples.push_back(render(shapes, height, width, classes, rng));
  }
  return samples;
}

DatasetAudit audit_dataset(const std::vector<SyntheticSample>& samples, std::size_t classes) {
  DatasetAudit a;
  a.presence.assign(classes, 0.0);
  a.pixel_fraction.assign(classes, 0.0);
  std::vector<std::size_t> with(classes, 0);
  a.min_shapes = samples.empty() ? 0 : classes;
  for (const auto& s : samples) {
    std::vector<std::size_t> count(classes, 0);
    for (auto l : s.mask.labels) {
      if (l >= classes) throw ContractError("audit_dataset: label outside the class range");
      ++count[l];
    }
    std::size_t shapes = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!count[c]) continue;
      ++with[c];
      a.pixel_fraction[c] += static_cast<double>(count[c]) / static_cast<double>(s.mask.labels.size());
      if (c > 0) ++shapes;
    }
    a.min_shapes = std::min(a.min_shapes, shapes);
    a.max_shapes = std::max(a.max_shapes, shapes);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    a.presence[c] = samples.empty() ? 0.0 : static_cast<double>(with[c]) / static_cast<double>(samples.size());
    if (with[c]) a.pixel_fraction[c] /= static_cast<double>(with[c]);
  }
  return a;
}

SyntheticSample augment(const SyntheticSample& sample, unsigned symmetry) {
  const std::size_t h = sample.mask.height, w = sample.mask.width;
  if (symmetry % 8 == 0) return sample;
  if (h != w && (symmetry & 1)) throw ContractError("augment: rotations need a square image");
  SyntheticSample out{Tensor({h, w, 1}), LabelMap(h, w)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sy = y, sx = x;
      if (symmetry & 1) std::swap(sy, sx);  // transpose
      if (symmetry & 2) sy = h - 1 - sy;
      if (symmetry & 4) sx = w - 1 - sx;
      out.image[y * w + x] = sample.image[sy * w + sx];
      out.mask.at(y, x) = sample.mask.at(sy, sx);
    }
  return out;
}

}  // namespace simmp
