#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "simmp/autograd.hpp"

namespace simmp {

// Integer class map, row-major.
struct LabelMap {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct ClassCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

ClassCounts count_class(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls);

// 2TP / (2TP + FP + FN); 1 when the class is absent from both maps.
double dsc(const ClassCounts& counts);
double dsc(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls);

// Foreground pixels of `cls` with at least one 4-neighbour outside the class
// (pixels beyond the image edge count as outside).
std::vector<std::pair<int, int>> class_boundary(const LabelMap& map, std::uint8_t cls);

// Symmetric 95th-percentile boundary distance in pixels: the larger of the two
// directed nearest-rank (ceil(0.95 n)-th smallest) percentiles. nullopt when either
// boundary is empty.
std::optional<double> hd95(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls);

struct ClassMetrics {
  ClassCounts counts;
  double dsc = 0.0;
  std::optional<double> hd95;  // mean over images where defined
};

struct SegMetrics {
  std::vector<ClassMetrics> per_class;
  double mean_dsc = 0.0;               // over foreground classes 1..k-1
  std::optional<double> mean_hd95;     // over foreground classes with a defined value
};

// Counts are pooled over all images; HD95 is averaged per class over images.
SegMetrics evaluate_segmentation(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& truths,
                                 std::size_t classes);

// Per-pixel argmax over logits[H x W x k]; ties go to the lower class.
LabelMap argmax_labels(const Tensor& logits);

inline constexpr double kDiceSmoothing = 1e-6;
inline constexpr double kDiceWeight = 0.7;
inline constexpr double kCrossEntropyWeight = 0.3;

// 1 - mean over classes of (2 sum p y + eps) / (sum p + sum y + eps), p = softmax(logits).
Var dice_loss(const Var& logits, const LabelMap& labels);
// Mean over pixels of -log softmax(logits)[true class].
Var ce_loss(const Var& logits, const LabelMap& labels);
Var combined_loss(const Var& logits, const LabelMap& labels, double dice_weight = kDiceWeight,
                  double ce_weight = kCrossEntropyWeight);

}  // namespace simmp
