#pragma once

// Differentiable tensor operations. Tensors are row-major; images are H x W x C and
// token matrices are T x C. Shapes are checked eagerly and reported as DimensionError.

#include <cstddef>
#include <span>
#include <vector>

#include "simmp/autograd.hpp"

namespace simmp {

inline constexpr double kCosineEps = 1e-12;

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var abs(const Var& x);

// x[..., C] + bias[C]
Var add_bias(const Var& x, const Var& bias);
// x[..., C] * gate[C]
Var mul_lastdim(const Var& x, const Var& gate);
// x[..., C] * gate[..., 1]
Var mul_broadcast_lastdim(const Var& x, const Var& gate);

Var sum(const Var& x);
Var mean(const Var& x);

Var matmul(const Var& a, const Var& b);
// a[m x n] * b[p x n]^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& x, Shape shape);

Var softmax_lastdim(const Var& x);
// Softmax over the entries of each last-axis slice where mask != 0; other entries are 0.
// A slice with no unmasked entries produces zeros.
Var masked_softmax_lastdim(const Var& x, const Tensor& mask);
Var log_softmax_lastdim(const Var& x);

// Cross-correlation. x: H x W x Cin, kernel: kh x kw x Cin x Cout (kh, kw odd).
Var conv2d(const Var& x, const Var& kernel, std::size_t stride, std::size_t padding);
// Half-pixel-center bilinear resampling of an H x W x C map.
Var bilinear_resize(const Var& x, std::size_t out_h, std::size_t out_w);

// P x P windows in row-major window order.
std::vector<Var> window_partition(const Var& x, std::size_t window);
Var window_merge(const std::vector<Var>& windows, std::size_t height, std::size_t width,
                 std::size_t window);

// Rows `index` of x[T x C] as an N x C matrix.
Var gather_rows(const Var& x, std::span<const std::size_t> index);
// Places the rows of x[N x C] at `index` inside a zero T x C matrix.
Var scatter_rows(const Var& x, std::span<const std::size_t> index, std::size_t rows);

// Reductions over the last axis, keeping it with extent 1.
Var mean_lastdim(const Var& x);
Var max_lastdim(const Var& x);
// (x - mean) / sqrt(var + eps) over each last-axis slice.
Var normalize_lastdim(const Var& x, double eps = 1e-5);
Var concat_lastdim(const Var& a, const Var& b);
// Reductions over every axis but the last: x[..., C] -> [C].
Var mean_over_positions(const Var& x);
Var max_over_positions(const Var& x);

// v[n x 1] -> n x cols, every column a copy of v.
Var broadcast_columns(const Var& v, std::size_t cols);

// a.b / (|a||b| + eps); a zero vector gives 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace simmp
