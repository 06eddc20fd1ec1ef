#include "simmp/ds_gim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

namespace simmp {

std::vector<double> decay_schedule(std::size_t count) {
  if (count == 0) throw ContractError("decay_schedule: count must be at least 1");
  std::vector<double> gamma(count);
  const double l = static_cast<double>(count);
  for (std::size_t n = 0; n < count; ++n) {
    gamma[n] = std::exp(-(0.25 - std::exp2(-2.5 - 5.0 * static_cast<double>(n) / l)));
  }
  return gamma;
}

std::size_t effective_window(std::size_t window, std::size_t height, std::size_t width) {
  return std::gcd(window, std::gcd(height, width));
}

WindowRanking rank_windows(const Tensor& x, std::size_t window) {
  if (x.rank() != 3) throw DimensionError("rank_windows: expected H x W x C, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw DimensionError("rank_windows: window " + std::to_string(window) + " does not divide " +
                         shape_str(x.shape()));
  }
  const std::size_t nwy = h / window, nwx = w / window, count = nwy * nwx;
  WindowRanking r;
  r.similarity.resize(count);
  std::vector<const double*> tok;
  for (std::size_t wi = 0; wi < count; ++wi) {
    const std::size_t wy = wi / nwx, wx = wi % nwx;
    tok.clear();
    for (std::size_t dy = 0; dy < window; ++dy)
      for (std::size_t dx = 0; dx < window; ++dx)
        tok.push_back(x.raw() + ((wy * window + dy) * w + wx * window + dx) * c);
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < tok.size(); ++i)
      for (std::size_t j = i + 1; j < tok.size(); ++j) {
        s += cosine_similarity({tok[i], c}, {tok[j], c});
        ++pairs;
      }
    r.similarity[wi] = pairs ? s / static_cast<double>(pairs) : 1.0;
  }
  r.order.resize(count);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.similarity[a] > r.similarity[b]; });
  r.rank.resize(count);
  for (std::size_t k = 0; k < count; ++k) r.rank[r.order[k]] = k;
  return r;
}

Var window_rank_and_decay(const Var& x, std::size_t window, const WindowRanking* frozen) {
  WindowRanking live;
  if (!frozen) {
    live = rank_windows(x.value(), window);
    frozen = &live;
  }
  const std::size_t h = x.value().dim(0), w = x.value().dim(1), c = x.value().dim(2);
  const std::size_t nwx = w / window;
  if (frozen->rank.size() != (h / window) * nwx) throw DimensionError("window_rank_and_decay: stale ranking");
  const auto gamma = decay_schedule(frozen->rank.size());
  Tensor factor(x.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) {
      const double g = gamma[frozen->rank[(y / window) * nwx + xx / window]];
      std::fill_n(factor.raw() + (y * w + xx) * c, c, g);
    }
  return mul(x, Var::constant(std::move(factor)));
}

double lower_median(const Tensor& t) {
  std::vector<double> v(t.data().begin(), t.data().end());
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

DsGimBlock::DsGimBlock(ParameterStore& store, Initializer& init, const std::string& name, std::size_t channels,
                       std::size_t window)
    : channels_(channels),
      window_(window),
      proj_a_(Linear::create(store, init, name + ".wa", channels, channels, false)),
      proj_b_(Linear::create(store, init, name + ".wb", channels, channels, false)) {}

Var DsGimBlock::forward(const Var& x, DsGimTrace* trace) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != channels_) {
    throw DimensionError("ds_gim_forward: input " + shape_str(s) + " for " + std::to_string(channels_) +
                         " channels");
  }
  const std::size_t win = effective_window(window_, s[0], s[1]);
  const std::size_t n = s[0] * s[1];
  const bool reuse = mode_ == DiscreteMode::frozen && frozen_ranking_ && frozen_masks_ &&
                     frozen_masks_->first.shape() == Shape{n, n};
  if (!reuse) frozen_ranking_ = rank_windows(x.value(), win);

  Var decayed = window_rank_and_decay(x, win, &*frozen_ranking_);
  Var tokens = reshape(decayed, {n, s[2]});
  Var affinity = matmul_nt(proj_a_(tokens), proj_b_(tokens));
  Var row_mean = mean_lastdim(affinity);
  Var spread = broadcast_columns(row_mean, n);
  Var distance = abs(sub(spread, transpose(spread)));

  double median = 0.0;
  if (!reuse) {
    median = lower_median(distance.value());
    Tensor near({n, n}), far({n, n});
    for (std::size_t i = 0; i < n * n; ++i) {
      const bool is_near = distance.value()[i] <= median;
      near[i] = is_near ? 1.0 : 0.0;
      far[i] = is_near ? 0.0 : 1.0;
    }
    frozen_masks_ = std::make_pair(std::move(near), std::move(far));
  }
  const auto& [near, far] = *frozen_masks_;
  Var mix = add(mul(masked_softmax_lastdim(distance, near), affinity),
                mul(masked_softmax_lastdim(distance, far), affinity));
  Var out = reshape(matmul(mix, tokens), s);

  if (trace) {
    trace->ranking = *frozen_ranking_;
    trace->affinity = affinity.value();
    trace->row_mean = row_mean.value();
    trace->distance = distance.value();
    trace->near_mask = near;
    trace->far_mask = far;
    trace->median = reuse ? lower_median(distance.value()) : median;
  }
  return out;
}

}  // namespace simmp
