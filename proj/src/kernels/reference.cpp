// Serial reference kernels. Written for clarity, not speed.

#include <algorithm>
#include <cmath>

#include "resize_taps.hpp"
#include "simmp/kernels.hpp"

namespace simmp::kernels::reference {

void gemm(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = accumulate ? c[i * p + j] : 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a[i * n + k] * b[k * p + j];
      c[i * p + j] = s;
    }
  }
}

void gemm_nt(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = accumulate ? c[i * p + j] : 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a[i * n + k] * b[j * n + k];
      c[i * p + j] = s;
    }
  }
}

void gemm_tn(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = accumulate ? c[r * p + j] : 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * n + r] * b[i * p + j];
      c[r * p + j] = s;
    }
  }
}

void softmax_rows(CSpan x, Span y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = std::exp(x[r * cols + j] - mx);
      sum += y[r * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] /= sum;
  }
}

void softmax_rows_backward(CSpan y, CSpan dy, Span dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += dy[r * cols + j] * y[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j) dx[r * cols + j] += y[r * cols + j] * (dy[r * cols + j] - dot);
  }
}

void conv2d(CSpan x, CSpan kernel, Span out, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        double s = 0.0;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) continue;
            for (std::size_t ci = 0; ci < g.in_channels; ++ci)
              s += x[(iy * g.width + ix) * g.in_channels + ci] *
                   kernel[((ky * g.kernel_w + kx) * g.in_channels + ci) * g.out_channels + co];
          }
        out[(oy * ow + ox) * g.out_channels + co] = s;
      }
}

void conv2d_backward_input(CSpan dout, CSpan kernel, Span dx, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) continue;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t co = 0; co < g.out_channels; ++co)
              dx[(iy * g.width + ix) * g.in_channels + ci] +=
                  dout[(oy * ow + ox) * g.out_channels + co] *
                  kernel[((ky * g.kernel_w + kx) * g.in_channels + ci) * g.out_channels + co];
        }
}

void conv2d_backward_kernel(CSpan x, CSpan dout, Span dkernel, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.height) || ix >= static_cast<long>(g.width)) continue;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t co = 0; co < g.out_channels; ++co)
              dkernel[((ky * g.kernel_w + kx) * g.in_channels + ci) * g.out_channels + co] +=
                  x[(iy * g.width + ix) * g.in_channels + ci] * dout[(oy * ow + ox) * g.out_channels + co];
        }
}

void bilinear_resize(CSpan x, Span out, const ResizeGeometry& g) {
  const auto ty = detail::resize_taps(g.height, g.out_height);
  const auto tx = detail::resize_taps(g.width, g.out_width);
  const std::size_t c = g.channels;
  for (std::size_t oy = 0; oy < g.out_height; ++oy)
    for (std::size_t ox = 0; ox < g.out_width; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v00 = x[(ty[oy].lo * g.width + tx[ox].lo) * c + ch];
        const double v01 = x[(ty[oy].lo * g.width + tx[ox].hi) * c + ch];
        const double v10 = x[(ty[oy].hi * g.width + tx[ox].lo) * c + ch];
        const double v11 = x[(ty[oy].hi * g.width + tx[ox].hi) * c + ch];
        const double fy = ty[oy].frac, fx = tx[ox].frac;
        out[(oy * g.out_width + ox) * c + ch] =
            (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      }
}

void bilinear_resize_backward(CSpan dout, Span dx, const ResizeGeometry& g) {
  const auto ty = detail::resize_taps(g.height, g.out_height);
  const auto tx = detail::resize_taps(g.width, g.out_width);
  const std::size_t c = g.channels;
  for (std::size_t oy = 0; oy < g.out_height; ++oy)
    for (std::size_t ox = 0; ox < g.out_width; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = dout[(oy * g.out_width + ox) * c + ch];
        const double fy = ty[oy].frac, fx = tx[ox].frac;
        dx[(ty[oy].lo * g.width + tx[ox].lo) * c + ch] += (1 - fy) * (1 - fx) * d;
        dx[(ty[oy].lo * g.width + tx[ox].hi) * c + ch] += (1 - fy) * fx * d;
        dx[(ty[oy].hi * g.width + tx[ox].lo) * c + ch] += fy * (1 - fx) * d;
        dx[(ty[oy].hi * g.width + tx[ox].hi) * c + ch] += fy * fx * d;
      }
}

}  // namespace simmp::kernels::reference
