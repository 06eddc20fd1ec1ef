#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/grad_suite.hpp"
#include "../common/test_util.hpp"
#include "../oracles/oracles.hpp"
#include "simmp/errors.hpp"
#include "simmp/gradcheck.hpp"
#include "simmp/kernels.hpp"
#include "simmp/ops.hpp"

using namespace simmp;
using testutil::uniform;

namespace {

void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Matmul, IdentityLeftFactor) {
  Var i = Var::constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  Var m = Var::constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  EXPECT_EQ(matmul(i, m).value(), m.value());
}

TEST(Matmul, ProjectionRow) {
  Var p = Var::constant(Tensor::from_rows({{1, 0}, {0, 0}}));
  Var v = Var::constant(Tensor::from_rows({{5}, {7}}));
  EXPECT_EQ(matmul(p, v).value(), Tensor::from_rows({{5}, {0}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor a = uniform({3, 4}, rng), b = uniform({4, 2}, rng);
    expect_near_all(matmul(Var::constant(a), Var::constant(b)).value(), oracle::matmul(a, b), 1e-15);
  }
}

TEST(Matmul, InnerExtentMismatchThrows) {
  Var a = Var::constant(Tensor({2, 3})), b = Var::constant(Tensor({2, 3}));
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Softmax, UniformInput) {
  const Tensor y = softmax_lastdim(Var::constant(Tensor({3}, 0.0))).value();
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-16);
}

TEST(Softmax, SingleElement) {
  EXPECT_EQ(softmax_lastdim(Var::constant(Tensor({1}, 4.2))).value()[0], 1.0);
}

TEST(Softmax, MatchesDirectEvaluation) {
  const Tensor x({3}, std::vector<double>{1, 2, 3});
  expect_near_all(softmax_lastdim(Var::constant(x)).value(), oracle::softmax_rows(x), 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(2);
  const Tensor x = uniform({6, 9}, rng, -30.0, 30.0);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 9; ++j) shifted[r * 9 + j] += 100.0 * static_cast<double>(r + 1);
  const Tensor y = softmax_lastdim(Var::constant(x)).value();
  const Tensor z = softmax_lastdim(Var::constant(shifted)).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_GE(y[r * 9 + j], 0.0);
      s += y[r * 9 + j];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  expect_near_all(y, z, 1e-12);
}

TEST(Conv2d, OneByOneIdentity) {
  std::mt19937_64 rng(3);
  const Tensor x = uniform({4, 5, 3}, rng);
  Tensor k({1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = 1.0;
  EXPECT_EQ(conv2d(Var::constant(x), Var::constant(k), 1, 0).value(), x);
}

TEST(Conv2d, OnesKernelOnConstantImage) {
  const std::size_t cin = 2;
  const Tensor x({5, 5, cin}, 1.5);
  const Tensor k({3, 3, cin, 1}, 1.0);
  const Tensor y = conv2d(Var::constant(x), Var::constant(k), 1, 1).value();
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c) EXPECT_DOUBLE_EQ(y.at(r, c, 0), 9.0 * 1.5 * cin);
}

TEST(Conv2d, MatchesSixLoopOracle) {
  std::mt19937_64 rng(4);
  for (std::size_t stride : {1, 2}) {
    const Tensor x = uniform({5, 5, 2}, rng), k = uniform({3, 3, 2, 3}, rng);
    expect_near_all(conv2d(Var::constant(x), Var::constant(k), stride, 1).value(), oracle::conv2d(x, k, stride, 1),
                    1e-14);
  }
}

TEST(Conv2d, KernelLargerThanPaddedInputThrows) {
  EXPECT_THROW(conv2d(Var::constant(Tensor({2, 2, 1})), Var::constant(Tensor({5, 5, 1, 1})), 1, 0), DimensionError);
}

TEST(BilinearResize, SameSizeIsBitwiseIdentity) {
  std::mt19937_64 rng(5);
  const Tensor x = uniform({5, 7, 2}, rng);
  EXPECT_EQ(bilinear_resize(Var::constant(x), 5, 7).value(), x);
}

TEST(BilinearResize, ConstantStaysConstant) {
  const Tensor x({3, 4, 2}, 0.625);
  for (auto [h, w] : {std::pair{1, 1}, {7, 2}, {9, 13}}) {
    const Tensor y = bilinear_resize(Var::constant(x), h, w).value();
    for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.625);
  }
}

TEST(BilinearResize, CheckerboardMatchesInterpolationOracle) {
  const Tensor x({2, 2, 1}, std::vector<double>{1, 0, 0, 1});
  expect_near_all(bilinear_resize(Var::constant(x), 4, 4).value(), oracle::bilinear(x, 4, 4), 1e-15);
  std::mt19937_64 rng(6);
  const Tensor r = uniform({5, 3, 2}, rng);
  expect_near_all(bilinear_resize(Var::constant(r), 8, 11).value(), oracle::bilinear(r, 8, 11), 1e-15);
  expect_near_all(bilinear_resize(Var::constant(r), 2, 2).value(), oracle::bilinear(r, 2, 2), 1e-15);
}

TEST(Windows, WholeImageWindow) {
  std::mt19937_64 rng(7);
  const Tensor x = uniform({4, 4, 2}, rng);
  auto w = window_partition(Var::constant(x), 4);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].value(), x);
}

TEST(Windows, RoundTripIdentity) {
  std::mt19937_64 rng(8);
  for (auto [h, w, p] : {std::tuple{4, 4, 2}, {6, 9, 3}, {8, 4, 4}, {5, 5, 1}}) {
    const Tensor x = uniform({std::size_t(h), std::size_t(w), 3}, rng);
    EXPECT_EQ(window_merge(window_partition(Var::constant(x), p), h, w, p).value(), x);
  }
}

TEST(Windows, LabeledGridIndexArithmetic) {
  Tensor grid({6, 6, 1});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) grid.at(r, c, 0) = static_cast<double>(10 * r + c);
  auto w = window_partition(Var::constant(grid), 3);
  ASSERT_EQ(w.size(), 4u);
  // window (1, 0) in row-major window order is index 2: rows 3..5, cols 0..2
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(w[2].value().at(r, c, 0), 10.0 * (r + 3) + c);
}

TEST(Windows, PermutedMergeDiffers) {
  Tensor grid({4, 4, 1});
  for (std::size_t i = 0; i < 16; ++i) grid[i] = static_cast<double>(i);
  auto w = window_partition(Var::constant(grid), 2);
  std::swap(w[1], w[2]);
  EXPECT_NE(window_merge(w, 4, 4, 2).value(), grid);
}

TEST(Windows, Errors) {
  EXPECT_THROW(window_partition(Var::constant(Tensor({5, 4, 1})), 2), DimensionError);
  auto w = window_partition(Var::constant(Tensor({4, 4, 1})), 2);
  w.pop_back();
  EXPECT_THROW(window_merge(w, 4, 4, 2), DimensionError);
}

TEST(Cosine, Examples) {
  const std::vector<double> a{1, 2}, b{2, 1}, e1{1, 0}, e2{0, 1}, z{0, 0};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-8);
  EXPECT_EQ(cosine_similarity(e1, e2), 0.0);
  EXPECT_NEAR(cosine_similarity(a, b), 0.8, 1e-12);
  EXPECT_EQ(cosine_similarity(z, a), 0.0);
  const std::vector<double> c{1, 2, 3};
  EXPECT_THROW(cosine_similarity(a, c), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  std::mt19937_64 rng(9);
  Var x = Var::leaf(uniform({3, 4}, rng));
  backward(sum(x));
  const Tensor grad = x.grad();
  for (double g : grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  std::mt19937_64 rng(10);
  Var x = Var::leaf(uniform({3, 4}, rng));
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < x.value().size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.value()[i]);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Var x = Var::leaf(Tensor({2}, 1.0));
  Var loss = sum(scale(x, 3.0));
  backward(loss);
  backward(loss);
  const Tensor grad = x.grad();
  for (double g : grad.data()) EXPECT_EQ(g, 6.0);
}

TEST(Backward, FanOutAccumulates) {
  Var x = Var::leaf(Tensor({2}, 2.0));
  backward(sum(add(mul(x, x), x)));  // d/dx (x^2 + x) = 2x + 1
  const Tensor grad = x.grad();
  for (double g : grad.data()) EXPECT_EQ(g, 5.0);
}

TEST(Backward, NonScalarLossThrows) {
  Var x = Var::leaf(Tensor({2, 2}, 1.0));
  EXPECT_THROW(backward(x), ContractError);
}

TEST(Backward, ComposedConvSoftmaxMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const Tensor k = uniform({3, 3, 2, 3}, rng);
  const Tensor x = uniform({4, 4, 2}, rng);
  const Tensor r = uniform({4, 4, 3}, rng);
  const double err = finite_diff_check(
      [&](const Var& v) {
        return sum(mul(softmax_lastdim(conv2d(v, Var::constant(k), 1, 1)), Var::constant(r)));
      },
      x);
  EXPECT_LE(err, 1e-6);
}

TEST(FiniteDiff, LinearFunctionIsExact) {
  std::mt19937_64 rng(12);
  const Tensor w = uniform({3, 3}, rng);
  const double err =
      finite_diff_check([&](const Var& v) { return sum(mul(v, Var::constant(w))); }, uniform({3, 3}, rng));
  EXPECT_LE(err, 1e-10);
}

TEST(FiniteDiff, SoftmaxSumUsesAbsoluteFallback) {
  std::mt19937_64 rng(13);
  const double err = finite_diff_check([](const Var& v) { return sum(softmax_lastdim(v)); }, uniform({2, 5}, rng));
  EXPECT_LE(err, 1e-4);
}

TEST(NonFinite, OperationsRejectNaN) {
  EXPECT_THROW(Var::constant(Tensor({2}, std::vector<double>{1.0, std::nan("")})), NonFiniteError);
  Var big = Var::constant(Tensor({1}, 1e308));
  EXPECT_THROW(scale(big, 10.0), NonFiniteError);
}

TEST(Determinism, RepeatedOpsAreBitwiseEqual) {
  std::mt19937_64 rng(14);
  const Tensor a = uniform({33, 47}, rng), b = uniform({47, 29}, rng);
  const Tensor k = uniform({3, 3, 4, 5}, rng), x = uniform({17, 13, 4}, rng);
  EXPECT_EQ(matmul(Var::constant(a), Var::constant(b)).value(), matmul(Var::constant(a), Var::constant(b)).value());
  EXPECT_EQ(conv2d(Var::constant(x), Var::constant(k), 2, 1).value(),
            conv2d(Var::constant(x), Var::constant(k), 2, 1).value());
  EXPECT_EQ(softmax_lastdim(Var::constant(a)).value(), softmax_lastdim(Var::constant(a)).value());
}

// The parallel kernels against the serial reference.
TEST(Kernels, ParallelMatchesReference) {
  namespace k = simmp::kernels;
  std::mt19937_64 rng(15);
  for (auto [m, n, p] : {std::tuple{1, 1, 1}, {7, 13, 5}, {33, 64, 47}, {128, 17, 130}}) {
    const Tensor a = uniform({std::size_t(m), std::size_t(n)}, rng);
    const Tensor b = uniform({std::size_t(n), std::size_t(p)}, rng);
    const Tensor bt = uniform({std::size_t(p), std::size_t(n)}, rng);
    const Tensor at = uniform({std::size_t(m), std::size_t(p)}, rng);
    Tensor c1({std::size_t(m), std::size_t(p)}), c2 = c1;
    k::gemm(a.data(), b.data(), c1.data(), m, n, p, false);
    k::reference::gemm(a.data(), b.data(), c2.data(), m, n, p, false);
    expect_near_all(c1, c2, 1e-12);
    k::gemm_nt(a.data(), bt.data(), c1.data(), m, n, p, false);
    k::reference::gemm_nt(a.data(), bt.data(), c2.data(), m, n, p, false);
    expect_near_all(c1, c2, 1e-12);
    Tensor d1({std::size_t(n), std::size_t(p)}), d2 = d1;
    k::gemm_tn(a.data(), at.data(), d1.data(), m, n, p, false);
    k::reference::gemm_tn(a.data(), at.data(), d2.data(), m, n, p, false);
    expect_near_all(d1, d2, 1e-12);

    const Tensor x = uniform({std::size_t(m), std::size_t(p)}, rng, -20, 20);
    Tensor y1 = x, y2 = x, g1({std::size_t(m), std::size_t(p)}), g2 = g1;
    k::softmax_rows(x.data(), y1.data(), m, p);
    k::reference::softmax_rows(x.data(), y2.data(), m, p);
    expect_near_all(y1, y2, 1e-14);
    k::softmax_rows_backward(y1.data(), x.data(), g1.data(), m, p);
    k::reference::softmax_rows_backward(y1.data(), x.data(), g2.data(), m, p);
    expect_near_all(g1, g2, 1e-12);
  }
  const k::ConvGeometry g{9, 11, 3, 3, 3, 4, 2, 1};
  const Tensor x = uniform({9, 11, 3}, rng), kern = uniform({3, 3, 3, 4}, rng);
  const Tensor dout = uniform({g.out_height(), g.out_width(), 4}, rng);
  Tensor o1({g.out_height(), g.out_width(), 4}), o2 = o1;
  k::conv2d(x.data(), kern.data(), o1.data(), g);
  k::reference::conv2d(x.data(), kern.data(), o2.data(), g);
  expect_near_all(o1, o2, 1e-12);
  Tensor dx1({9, 11, 3}), dx2 = dx1, dk1({3, 3, 3, 4}), dk2 = dk1;
  k::conv2d_backward_input(dout.data(), kern.data(), dx1.data(), g);
  k::reference::conv2d_backward_input(dout.data(), kern.data(), dx2.data(), g);
  expect_near_all(dx1, dx2, 1e-12);
  k::conv2d_backward_kernel(x.data(), dout.data(), dk1.data(), g);
  k::reference::conv2d_backward_kernel(x.data(), dout.data(), dk2.data(), g);
  expect_near_all(dk1, dk2, 1e-12);
  const k::ResizeGeometry rg{5, 7, 3, 12, 4};
  const Tensor rx = uniform({5, 7, 3}, rng), rd = uniform({12, 4, 3}, rng);
  Tensor r1({12, 4, 3}), r2 = r1, b1({5, 7, 3}), b2 = b1;
  k::bilinear_resize(rx.data(), r1.data(), rg);
  k::reference::bilinear_resize(rx.data(), r2.data(), rg);
  expect_near_all(r1, r2, 1e-14);
  k::bilinear_resize_backward(rd.data(), b1.data(), rg);
  k::reference::bilinear_resize_backward(rd.data(), b2.data(), rg);
  expect_near_all(b1, b2, 1e-13);
}

// Every op and composed block against central differences on several seeds.
class GradientSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientSuite, WithinTolerance) {
  const auto cases = gradsuite::all_cases();
  const auto& c = cases.at(GetParam());
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GradCheckResult r = c.run(seed);
    EXPECT_LE(r.max_relative_error, 1e-4) << c.name << " seed " << seed << ": " << r.describe();
    EXPECT_GT(r.entries_checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientSuite, ::testing::Range<std::size_t>(0, gradsuite::all_cases().size()),
                         [](const auto& info) { return gradsuite::all_cases()[info.param].name; });
