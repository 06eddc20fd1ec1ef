#pragma once

// Double-similarity global internal enhancement (DS-GIM).
//
// Windows of the input are ranked by their mean pairwise cosine similarity and
// scaled by a decreasing decay coefficient. The decayed map X' then yields an
// HW x HW affinity X_I = (X' Wa)(X' Wb)^T. Row means of X_I give X_II, and
// Euc = |S - S^T| with S_ij = X_II[i] is split at its median into a near mask
// (<= median) and a far mask. Each mask gets its own row softmax over Euc:
//
//   O_D = (SM_near(Euc) * X_I + SM_far(Euc) * X_I) X'

#include <optional>
#include <string>
#include <vector>

#include "simmp/dmw_la.hpp"
#include "simmp/layers.hpp"

namespace simmp {

// gamma_n = exp(-(0.25 - 2^(-2.5 - 5 n / count))), n = 0 .. count-1.
std::vector<double> decay_schedule(std::size_t count);

struct WindowRanking {
  std::vector<double> similarity;  // mean pairwise cosine per window
  std::vector<std::size_t> order;  // window indices, most similar first
  std::vector<std::size_t> rank;   // rank of each window
};

// Ties keep the lower window index first.
WindowRanking rank_windows(const Tensor& x, std::size_t window);

// x with window w scaled by gamma[rank[w]]. `frozen` reuses a previous ranking.
Var window_rank_and_decay(const Var& x, std::size_t window, const WindowRanking* frozen = nullptr);

// Intermediate values of one DS-GIM pass, for inspection.
struct DsGimTrace {
  WindowRanking ranking;
  Tensor affinity;  // X_I
  Tensor row_mean;  // X_II
  Tensor distance;  // Euc
  Tensor near_mask;
  Tensor far_mask;
  double median = 0.0;
};

// Largest window <= `window` dividing both extents (gcd), so small maps still split.
std::size_t effective_window(std::size_t window, std::size_t height, std::size_t width);

// Median of all entries, taking the lower middle element for an even count.
double lower_median(const Tensor& t);

class DsGimBlock {
 public:
  DsGimBlock(ParameterStore& store, Initializer& init, const std::string& name, std::size_t channels,
             std::size_t window);

  Var forward(const Var& x, DsGimTrace* trace = nullptr);

  std::size_t window() const { return window_; }
  const Linear& proj_a() const { return proj_a_; }
  const Linear& proj_b() const { return proj_b_; }
  void set_discrete_mode(DiscreteMode mode) { mode_ = mode; }

 private:
  std::size_t channels_;
  std::size_t window_;
  Linear proj_a_, proj_b_;
  DiscreteMode mode_ = DiscreteMode::live;
  std::optional<WindowRanking> frozen_ranking_;
  std::optional<std::pair<Tensor, Tensor>> frozen_masks_;
};

}  // namespace simmp
