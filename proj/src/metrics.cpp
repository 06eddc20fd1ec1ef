#include "simmp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

namespace simmp {

namespace {

void require_same_extents(const LabelMap& a, const LabelMap& b) {
  if (a.height != b.height || a.width != b.width || a.labels.size() != b.labels.size()) {
    throw DimensionError("label maps differ in extents: " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
  }
}

constexpr double kFar = 1e20;

// Squared distance transform of a 1-D sampled function (lower envelope of parabolas).
void edt_1d(const double* f, double* d, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  auto intersect = [&](std::size_t q, std::size_t p) {
    const double dq = static_cast<double>(q), dp = static_cast<double>(p);
    return ((f[q] + dq * dq) - (f[p] + dp * dp)) / (2.0 * dq - 2.0 * dp);
  };
  std::size_t k = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::size_t q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

// Exact squared Euclidean distance to the nearest site, row-major h x w.
std::vector<double> squared_distance_map(const std::vector<std::pair<int, int>>& sites, std::size_t h,
                                         std::size_t w) {
  std::vector<double> grid(h * w, kFar);
  for (auto [y, x] : sites) grid[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 0.0;
  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> col(h), out(std::max(h, w));
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) col[y] = grid[y * w + x];
    edt_1d(col.data(), out.data(), h, v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = out[y];
  }
  std::vector<double> row(w);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(grid.data() + y * w, w, row.data());
    edt_1d(row.data(), grid.data() + y * w, w, v, z);
  }
  return grid;
}

double nearest_rank_95(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

double directed_percentile(const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to,
                           std::size_t h, std::size_t w) {
  const auto dt = squared_distance_map(to, h, w);
  std::vector<double> d;
  d.reserve(from.size());
  for (auto [y, x] : from) d.push_back(std::sqrt(dt[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)]));
  return nearest_rank_95(std::move(d));
}

}  // namespace

ClassCounts count_class(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls) {
  require_same_extents(pred, truth);
  ClassCounts c;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] == cls, t = truth.labels[i] == cls;
    c.tp += p && t;
    c.fp += p && !t;
    c.fn += !p && t;
  }
  return c;
}

double dsc(const ClassCounts& c) {
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) + static_cast<double>(c.fn);
  if (denom == 0.0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / denom;
}

double dsc(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls) { return dsc(count_class(pred, truth, cls)); }

std::vector<std::pair<int, int>> class_boundary(const LabelMap& map, std::uint8_t cls) {
  std::vector<std::pair<int, int>> out;
  const int h = static_cast<int>(map.height), w = static_cast<int>(map.width);
  auto inside = [&](int y, int x) {
    return y >= 0 && x >= 0 && y < h && x < w && map.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) == cls;
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!inside(y, x)) continue;
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)) out.emplace_back(y, x);
    }
  return out;
}

std::optional<double> hd95(const LabelMap& pred, const LabelMap& truth, std::uint8_t cls) {
  require_same_extents(pred, truth);
  const auto bp = class_boundary(pred, cls);
  const auto bt = class_boundary(truth, cls);
  if (bp.empty() || bt.empty()) return std::nullopt;
  return std::max(directed_percentile(bp, bt, pred.height, pred.width),
                  directed_percentile(bt, bp, pred.height, pred.width));
}

SegMetrics evaluate_segmentation(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& truths,
                                 std::size_t classes) {
  if (preds.size() != truths.size()) throw DimensionError("evaluate_segmentation: prediction/truth count mismatch");
  SegMetrics m;
  m.per_class.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double hd_sum = 0.0;
    std::size_t hd_n = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto counts = count_class(preds[i], truths[i], static_cast<std::uint8_t>(c));
      m.per_class[c].counts.tp += counts.tp;
      m.per_class[c].counts.fp += counts.fp;
      m.per_class[c].counts.fn += counts.fn;
      if (auto h = hd95(preds[i], truths[i], static_cast<std::uint8_t>(c))) {
        hd_sum += *h;
        ++hd_n;
      }
    }
    m.per_class[c].dsc = dsc(m.per_class[c].counts);
    if (hd_n) m.per_class[c].hd95 = hd_sum / static_cast<double>(hd_n);
  }
  double dsum = 0.0, hsum = 0.0;
  std::size_t hn = 0;
  const std::size_t first = classes > 1 ? 1 : 0;
  for (std::size_t c = first; c < classes; ++c) {
    dsum += m.per_class[c].dsc;
    if (m.per_class[c].hd95) {
      hsum += *m.per_class[c].hd95;
      ++hn;
    }
  }
  m.mean_dsc = dsum / static_cast<double>(classes - first);
  if (hn) m.mean_hd95 = hsum / static_cast<double>(hn);
  return m;
}

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() != 3) throw DimensionError("argmax_labels: expected H x W x k logits");
  const std::size_t h = logits.dim(0), w = logits.dim(1), k = logits.dim(2);
  LabelMap out(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (logits[i * k + c] > logits[i * k + best]) best = c;
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

void check_loss_inputs(const Var& logits, const LabelMap& labels) {
  const Shape& s = logits.shape();
  if (s.size() != 3 || s[0] != labels.height || s[1] != labels.width) {
    throw DimensionError("loss: logits " + shape_str(s) + " vs labels " + std::to_string(labels.height) + "x" +
                         std::to_string(labels.width));
  }
  for (auto l : labels.labels) {
    if (l >= s[2]) throw ContractError("loss: label " + std::to_string(l) + " outside [0, " + std::to_string(s[2]) + ")");
  }
}

Tensor softmax_classes(const Tensor& logits) {
  const std::size_t k = logits.shape().back();
  const std::size_t n = logits.size() / k;
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.raw() + i * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += (p[i * k + c] = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < k; ++c) p[i * k + c] /= s;
  }
  return p;
}

}  // namespace

Var dice_loss(const Var& logits, const LabelMap& labels) {
  check_loss_inputs(logits, labels);
  const std::size_t k = logits.shape()[2];
  const std::size_t n = labels.labels.size();
  Tensor p = softmax_classes(logits.value());
  std::vector<double> inter(k, 0.0), psum(k, 0.0), ysum(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) psum[c] += p[i * k + c];
    inter[labels.labels[i]] += p[i * k + labels.labels[i]];
    ysum[labels.labels[i]] += 1.0;
  }
  double mean_dice = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    mean_dice += (2.0 * inter[c] + kDiceSmoothing) / (psum[c] + ysum[c] + kDiceSmoothing);
  }
  mean_dice /= static_cast<double>(k);
  return make_op(Tensor::scalar(1.0 - mean_dice), {logits},
                 [logits, labels, p, inter, psum, ysum, k, n](const Tensor& g, const Tensor&) {
                   Tensor& dz = logits.node()->grad_buffer();
                   std::vector<double> dp(k);
                   const double scale = -g[0] / static_cast<double>(k);
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t c = 0; c < k; ++c) {
                       const double denom = psum[c] + ysum[c] + kDiceSmoothing;
                       const double y = labels.labels[i] == c ? 1.0 : 0.0;
                       dp[c] = scale * (2.0 * y / denom - (2.0 * inter[c] + kDiceSmoothing) / (denom * denom));
                     }
                     double dot = 0.0;
                     for (std::size_t c = 0; c < k; ++c) dot += dp[c] * p[i * k + c];
                     for (std::size_t c = 0; c < k; ++c) dz[i * k + c] += p[i * k + c] * (dp[c] - dot);
                   }
                 });
}

Var ce_loss(const Var& logits, const LabelMap& labels) {
  check_loss_inputs(logits, labels);
  const std::size_t k = logits.shape()[2];
  const std::size_t n = labels.labels.size();
  Tensor p = softmax_classes(logits.value());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.value().raw() + i * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c] - mx);
    total += (mx + std::log(s)) - z[labels.labels[i]];
  }
  return make_op(Tensor::scalar(total / static_cast<double>(n)), {logits},
                 [logits, labels, p, k, n](const Tensor& g, const Tensor&) {
                   Tensor& dz = logits.node()->grad_buffer();
                   const double scale = g[0] / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t c = 0; c < k; ++c)
                       dz[i * k + c] += scale * (p[i * k + c] - (labels.labels[i] == c ? 1.0 : 0.0));
                 });
}

Var combined_loss(const Var& logits, const LabelMap& labels, double dice_weight, double ce_weight) {
  return add(scale(dice_loss(logits, labels), dice_weight), scale(ce_loss(logits, labels), ce_weight));
}

}  // namespace simmp
