#pragma once

// Synthetic grayscale segmentation data: textured disks, rectangles, annuli and
// triangles on a dark background, one foreground class per shape kind, each kind in
// its own intensity band. Images are quantized to 8 bits so they survive a P5 round trip.

#include <cstdint>
#include <vector>

#include "simmp/metrics.hpp"
#include "simmp/tensor.hpp"

namespace simmp {

inline constexpr std::size_t kMinClasses = 2;
inline constexpr std::size_t kMaxClasses = 5;
inline constexpr double kImageNoise = 0.05;

struct SyntheticSample {
  Tensor image;  // H x W x 1, values in [0, 1] on the 1/255 grid
  LabelMap mask;
};

// Deterministic in (n, height, width, classes, seed). Every sample holds 1..3 shapes.
std::vector<SyntheticSample> generate_synthetic_dataset(std::size_t n, std::size_t height, std::size_t width,
                                                        std::size_t classes, std::uint64_t seed);

struct DatasetAudit {
  std::vector<double> presence;        // share of samples containing each class
  std::vector<double> pixel_fraction;  // mean class area / image area over samples containing it
  std::size_t min_shapes = 0, max_shapes = 0;
};

DatasetAudit audit_dataset(const std::vector<SyntheticSample>& samples, std::size_t classes);

// One of the 8 flip/rotation symmetries of a square image, applied to image and mask.
SyntheticSample augment(const SyntheticSample& sample, unsigned symmetry);

}  // namespace simmp
