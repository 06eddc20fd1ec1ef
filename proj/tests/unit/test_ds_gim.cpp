#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/test_util.hpp"
#include "../oracles/oracles.hpp"
#include "simmp/ds_gim.hpp"
#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

using namespace simmp;
using testutil::uniform;

TEST(DecaySchedule, FirstValueToTwelveDigits) {
  const auto g = decay_schedule(4);
  const long double want = std::exp(-(0.25L - std::pow(2.0L, -2.5L)));
  EXPECT_NEAR(g[0], static_cast<double>(want), 1e-12);
  EXPECT_NEAR(g[0], 0.92939, 1e-5);
}

TEST(DecaySchedule, StrictlyDecreasingAndBounded) {
  for (std::size_t count : {1, 2, 4, 16, 64, 1024}) {
    const auto g = decay_schedule(count);
    ASSERT_EQ(g.size(), count);
    for (std::size_t n = 0; n < count; ++n) {
      EXPECT_GT(g[n], std::exp(-0.25));
      EXPECT_LT(g[n], 1.0);
      if (n) EXPECT_LT(g[n], g[n - 1]);
    }
  }
  EXPECT_NEAR(decay_schedule(100000).back(), std::exp(-0.25), 1e-2);
  EXPECT_THROW(decay_schedule(0), ContractError);
}

TEST(WindowDecay, SingleWindowScalesByFirstGamma) {
  std::mt19937_64 rng(1);
  const Tensor x = uniform({4, 4, 2}, rng);
  const Tensor y = window_rank_and_decay(Var::constant(x), 4).value();
  const double g0 = decay_schedule(1)[0];
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i] * g0);
}

TEST(WindowDecay, IdenticalWindowsTieByIndex) {
  std::mt19937_64 rng(2);
  const Tensor win = uniform({2, 2, 3}, rng);
  Tensor x({2, 4, 3});
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t xx = 0; xx < 4; ++xx)
      for (std::size_t c = 0; c < 3; ++c) x.at(y, xx, c) = win.at(y, xx % 2, c);
  const auto r = rank_windows(x, 2);
  EXPECT_EQ(r.rank, (std::vector<std::size_t>{0, 1}));
  const auto g = decay_schedule(2);
  const Tensor y = window_rank_and_decay(Var::constant(x), 2).value();
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0), x.at(0, 0, 0) * g[0]);
  EXPECT_DOUBLE_EQ(y.at(0, 2, 0), x.at(0, 2, 0) * g[1]);
}

TEST(WindowDecay, DesignedOrderingMatchesPairwiseOracle) {
  // Window w holds tokens that drift apart by w radians, so similarity falls with the index
  // after the windows are shuffled into a known position.
  const std::vector<std::size_t> position_of{2, 0, 3, 1};
  Tensor x({4, 4, 2});
  for (std::size_t w = 0; w < 4; ++w) {
    const std::size_t p = position_of[w], py = p / 2, px = p % 2;
    for (std::size_t t = 0; t < 4; ++t) {
      const double angle = 0.3 * static_cast<double>(w) * static_cast<double>(t);
      x.at(py * 2 + t / 2, px * 2 + t % 2, 0) = std::cos(angle);
      x.at(py * 2 + t / 2, px * 2 + t % 2, 1) = std::sin(angle);
    }
  }
  const auto r = rank_windows(x, 2);
  EXPECT_EQ(r.rank, oracle::window_ranks(x, 2));
  for (std::size_t w = 0; w < 4; ++w) EXPECT_EQ(r.rank[position_of[w]], w);

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor z = uniform({6, 6, 3}, rng);
    EXPECT_EQ(rank_windows(z, 3).rank, oracle::window_ranks(z, 3));
  }
}

TEST(WindowDecay, NonDivisibleWindowThrows) {
  EXPECT_THROW(window_rank_and_decay(Var::constant(Tensor({5, 4, 1})), 2), DimensionError);
}

TEST(Median, LowerMiddleForEvenCount) {
  EXPECT_EQ(lower_median(Tensor({4}, std::vector<double>{4, 1, 3, 2})), 2.0);
  EXPECT_EQ(lower_median(Tensor({3}, std::vector<double>{5, 1, 3})), 3.0);
  EXPECT_EQ(effective_window(4, 2, 2), 2u);
  EXPECT_EQ(effective_window(4, 8, 6), 2u);
  EXPECT_EQ(effective_window(4, 16, 16), 4u);
}

namespace {

struct Gim {
  ParameterStore store;
  Initializer init{7, InitMode::random};
  DsGimBlock block;
  explicit Gim(std::size_t c, std::size_t window = 2) : block(store, init, "g", c, window) {}
};

}  // namespace

TEST(DsGim, ConstantInputHasZeroDistances) {
  Gim g(3);
  DsGimTrace trace;
  const Tensor x({2, 2, 3}, 0.5);  // one window, so every token gets the same decay
  const Tensor y = g.block.forward(Var::constant(x), &trace).value();
  for (double d : trace.distance.data()) EXPECT_EQ(d, 0.0);
  for (double m : trace.near_mask.data()) EXPECT_EQ(m, 1.0);
  for (double m : trace.far_mask.data()) EXPECT_EQ(m, 0.0);
  // Uniform mixing: row i of the mix is X_I[i, :] / n.
  const std::size_t n = 4;
  const Tensor decayed = window_rank_and_decay(Var::constant(x), 2, &trace.ranking).value().reshaped({n, 3});
  Tensor mix({n, n});
  for (std::size_t i = 0; i < n * n; ++i) mix[i] = trace.affinity[i] / n;
  const Tensor want = oracle::matmul(mix, decayed);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-14);
}

TEST(DsGim, DistanceArithmeticOnKnownRowMeans) {
  // Euc for row means [1, 2, 3] is |s_i - s_j| with median 1.
  const Var s = Var::constant(Tensor({3, 1}, std::vector<double>{1, 2, 3}));
  const Var spread = broadcast_columns(s, 3);
  const Tensor euc = abs(sub(spread, transpose(spread))).value();
  EXPECT_EQ(euc, Tensor::from_rows({{0, 1, 2}, {1, 0, 1}, {2, 1, 0}}));
  EXPECT_EQ(lower_median(euc), 1.0);
}

TEST(DsGim, MatchesStraightLineOracle) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    Gim g(3);
    const Tensor x = uniform({4, 4, 3}, rng);
    const Tensor want = oracle::ds_gim(x, 2, g.block.proj_a().weight.value(), g.block.proj_b().weight.value());
    const Tensor y = g.block.forward(Var::constant(x)).value();
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
  }
}

TEST(DsGim, TraceInvariantsOnRandomInputs) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    Gim g(3);
    const std::size_t h = 2 + 2 * (rep % 3), w = 2 + 2 * ((rep / 3) % 3);
    const Tensor x = uniform({h, w, 3}, rng, -2, 2);
    DsGimTrace t;
    const Tensor y = g.block.forward(Var::constant(x), &t).value();
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_TRUE(y.all_finite());
    const std::size_t n = h * w;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(t.distance.at(i, i), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(t.distance.at(i, j), t.distance.at(j, i));
        EXPECT_EQ(t.near_mask.at(i, j) + t.far_mask.at(i, j), 1.0);
        EXPECT_EQ(t.near_mask.at(i, j) == 1.0, t.distance.at(i, j) <= t.median);
      }
    }
  }
}

TEST(DsGim, FrozenModeReusesMasks) {
  Gim g(2);
  std::mt19937_64 rng(6);
  const Tensor x = uniform({4, 4, 2}, rng);
  DsGimTrace first, second;
  g.block.forward(Var::constant(x), &first);
  g.block.set_discrete_mode(DiscreteMode::frozen);
  Tensor nudged = x;
  for (auto& v : nudged.data()) v *= 1.5;
  g.block.forward(Var::constant(nudged), &second);
  EXPECT_EQ(first.near_mask, second.near_mask);
  EXPECT_EQ(first.ranking.rank, second.ranking.rank);
}

TEST(DsGim, WrongChannelsThrow) {
  Gim g(3);
  EXPECT_THROW(g.block.forward(Var::constant(Tensor({4, 4, 2}))), DimensionError);
}
