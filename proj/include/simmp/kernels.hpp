#pragma once

// Raw numeric kernels behind the differentiable ops.
//
// Every kernel exists twice: the OpenMP version in `simmp::kernels` used by the
// library, and a plain serial version in `simmp::kernels::reference` kept as the
// test and benchmark baseline. Parallel loops split only over output elements and
// each output element is reduced in a fixed order, so results do not depend on
// the thread count.

#include <cstddef>
#include <span>

namespace simmp::kernels {

using CSpan = std::span<const double>;
using Span = std::span<double>;

struct ConvGeometry {
  std::size_t height = 0, width = 0, in_channels = 0;
  std::size_t kernel_h = 0, kernel_w = 0, out_channels = 0;
  std::size_t stride = 1, padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
};

struct ResizeGeometry {
  std::size_t height = 0, width = 0, channels = 0;
  std::size_t out_height = 0, out_width = 0;
};

// c[m x p] = a[m x n] * b[n x p]   (c += ... when accumulate)
void gemm(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate);
// c[m x p] = a[m x n] * b[p x n]^T
void gemm_nt(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate);
// c[n x p] = a[m x n]^T * b[m x p]
void gemm_tn(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate);

void softmax_rows(CSpan x, Span y, std::size_t rows, std::size_t cols);
// dx += y * (dy - <dy, y>) per row
void softmax_rows_backward(CSpan y, CSpan dy, Span dx, std::size_t rows, std::size_t cols);

// x: H x W x Cin, kernel: kh x kw x Cin x Cout, out: OH x OW x Cout (overwritten).
void conv2d(CSpan x, CSpan kernel, Span out, const ConvGeometry& g);
void conv2d_backward_input(CSpan dout, CSpan kernel, Span dx, const ConvGeometry& g);
void conv2d_backward_kernel(CSpan x, CSpan dout, Span dkernel, const ConvGeometry& g);

// Bilinear resampling with half-pixel centers (align_corners = false).
void bilinear_resize(CSpan x, Span out, const ResizeGeometry& g);
void bilinear_resize_backward(CSpan dout, Span dx, const ResizeGeometry& g);

namespace reference {

void gemm(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate);
void gemm_nt(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate);
void gemm_tn(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate);
void softmax_rows(CSpan x, Span y, std::size_t rows, std::size_t cols);
void softmax_rows_backward(CSpan y, CSpan dy, Span dx, std::size_t rows, std::size_t cols);
void conv2d(CSpan x, CSpan kernel, Span out, const ConvGeometry& g);
void conv2d_backward_input(CSpan dout, CSpan kernel, Span dx, const ConvGeometry& g);
void conv2d_backward_kernel(CSpan x, CSpan dout, Span dkernel, const ConvGeometry& g);
void bilinear_resize(CSpan x, Span out, const ResizeGeometry& g);
void bilinear_resize_backward(CSpan dout, Span dx, const ResizeGeometry& g);

}  // namespace reference

}  // namespace simmp::kernels
