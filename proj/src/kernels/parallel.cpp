#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "resize_taps.hpp"
#include "lanes.hpp"
#include "simmp/kernels.hpp"

namespace simmp::kernels {

namespace {
using Index = long;  // OpenMP loop counters

}  // namespace

namespace {

constexpr std::size_t kRowBlock = 4;
using detail::kLanes;
using detail::Lanes;
using detail::load_lanes;
using detail::store_lanes;
constexpr std::size_t kColBlock = 2 * kLanes;

// R x kColBlock tile of C (row stride p) over `depth` products. Element (r, k) of the
// left operand is A[r * a_row + k * a_depth]. Accumulators live in registers and each
// output still sums over k in ascending order.
template <std::size_t R>
inline void micro_tile(const double* A, std::size_t a_row, std::size_t a_depth, const double* B, double* C,
                       std::size_t depth, std::size_t p, bool accumulate) {
  Lanes acc[R][2];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < 2; ++v) acc[r][v] = accumulate ? load_lanes(C + r * p + v * kLanes) : Lanes{};
  for (std::size_t k = 0; k < depth; ++k) {
    const Lanes b0 = load_lanes(B + k * p);
    const Lanes b1 = load_lanes(B + k * p + kLanes);
    for (std::size_t r = 0; r < R; ++r) {
      const double av = A[r * a_row + k * a_depth];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < 2; ++v) store_lanes(C + r * p + v * kLanes, acc[r][v]);
}

inline void gemm_tile(const double* A, const double* B, double* C, std::size_t i0, std::size_t j0, std::size_t n,
                      std::size_t p, bool accumulate) {
  micro_tile<kRowBlock>(A + i0 * n, n, 1, B + j0, C + i0 * p + j0, n, p, accumulate);
}

// Rows [i0, i1) x columns [j0, p), plain loops.
inline void gemm_edge(const double* A, const double* B, double* C, std::size_t i0, std::size_t i1, std::size_t j0,
                      std::size_t n, std::size_t p, bool accumulate) {
  for (std::size_t i = i0; i < i1; ++i) {
    double* crow = C + i * p;
    if (!accumulate) std::fill(crow + j0, crow + p, 0.0);
    const double* arow = A + i * n;
    for (std::size_t k = 0; k < n; ++k) {
      const double av = arow[k];
      const double* brow = B + k * p;
#pragma omp simd
      for (std::size_t j = j0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[cols x rows] = in[rows x cols]^T in cache-sized tiles.
void transpose_into(const double* in, double* out, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile), c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
}

}  // namespace

void gemm(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const std::size_t full_rows = m / kRowBlock * kRowBlock;
  const std::size_t full_cols = p / kColBlock * kColBlock;
  const Index blocks = static_cast<Index>(full_rows / kRowBlock);
#pragma omp parallel for schedule(static)
  for (Index bi = 0; bi < blocks; ++bi) {
    const std::size_t i0 = static_cast<std::size_t>(bi) * kRowBlock;
    for (std::size_t j0 = 0; j0 < full_cols; j0 += kColBlock) gemm_tile(A, B, C, i0, j0, n, p, accumulate);
    if (full_cols < p) gemm_edge(A, B, C, i0, i0 + kRowBlock, full_cols, n, p, accumulate);
  }
  if (full_rows < m) gemm_edge(A, B, C, full_rows, m, 0, n, p, accumulate);
}

void gemm_nt(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
  std::vector<double> bt(n * p);
  transpose_into(b.data(), bt.data(), p, n);
  gemm(a, bt, c, m, n, p, accumulate);
}

void gemm_tn(CSpan a, CSpan b, Span c, std::size_t m, std::size_t n, std::size_t p, bool accumulate) {
  // C[n x p] = A^T B with A m x n: tile rows of C are contiguous column groups of A,
  // eight of them so each A access uses a whole cache line.
  constexpr std::size_t kTnRowBlock = 8;
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
  const std::size_t full_rows = n / kTnRowBlock * kTnRowBlock;
  const std::size_t full_cols = p / kColBlock * kColBlock;
  const Index blocks = static_cast<Index>((n + kTnRowBlock - 1) / kTnRowBlock);
#pragma omp parallel for schedule(static)
  for (Index bi = 0; bi < blocks; ++bi) {
    const std::size_t r0 = static_cast<std::size_t>(bi) * kTnRowBlock;
    if (r0 < full_rows) {
      for (std::size_t j0 = 0; j0 < full_cols; j0 += kColBlock) {
        micro_tile<kTnRowBlock>(A + r0, 1, n, B + j0, C + r0 * p + j0, m, p, accumulate);
      }
    }
    const std::size_t r1 = std::min(n, r0 + kTnRowBlock);
    const std::size_t j_start = r0 < full_rows ? full_cols : 0;
    if (j_start == p) continue;
    for (std::size_t r = r0; r < r1; ++r) {
      double* crow = C + r * p;
      if (!accumulate) std::fill(crow + j_start, crow + p, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double av = A[i * n + r];
        const double* brow = B + i * p;
#pragma omp simd
        for (std::size_t j = j_start; j < p; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void softmax_rows(CSpan x, Span y, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    const double mx = detail::lane_max(xr, cols);
    detail::exp_shifted(xr, yr, cols, mx);
    const double inv = 1.0 / detail::lane_sum(yr, cols);
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void softmax_rows_backward(CSpan y, CSpan dy, Span dx, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const double* yr = y.data() + r * cols;
    const double* dyr = dy.data() + r * cols;
    double* dxr = dx.data() + r * cols;
    const double dot = detail::lane_dot(dyr, yr, cols);
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

void conv2d(CSpan x, CSpan kernel, Span out, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
#pragma omp parallel for schedule(static)
  for (Index oy = 0; oy < static_cast<Index>(oh); ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = out.data() + (oy * ow + ox) * cout;
      std::fill(o, o + cout, 0.0);
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
          const double* xp = x.data() + (iy * g.width + ix) * cin;
          const double* kp = kernel.data() + (ky * g.kernel_w + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xp[ci];
            const double* kr = kp + ci * cout;
#pragma omp simd
            for (std::size_t co = 0; co < cout; ++co) o[co] += xv * kr[co];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(CSpan dout, CSpan kernel, Span dx, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const long stride = static_cast<long>(g.stride), pad = static_cast<long>(g.padding);
#pragma omp parallel for schedule(static)
  for (Index iy = 0; iy < static_cast<Index>(g.height); ++iy) {
    for (std::size_t ix = 0; ix < g.width; ++ix) {
      double* d = dx.data() + (iy * g.width + ix) * cin;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const long ny = iy + pad - static_cast<long>(ky);
        if (ny < 0 || ny % stride != 0 || ny / stride >= static_cast<long>(oh)) continue;
        const long oy = ny / stride;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const long nx = static_cast<long>(ix) + pad - static_cast<long>(kx);
          if (nx < 0 || nx % stride != 0 || nx / stride >= static_cast<long>(ow)) continue;
          const long ox = nx / stride;
          const double* go = dout.data() + (oy * ow + ox) * cout;
          const double* kp = kernel.data() + (ky * g.kernel_w + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* kr = kp + ci * cout;
            double s = 0.0;
            for (std::size_t co = 0; co < cout; ++co) s += go[co] * kr[co];
            d[ci] += s;
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(CSpan x, CSpan dout, Span dkernel, const ConvGeometry& g) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t cin = g.in_channels, cout = g.out_channels;
  const Index rows = static_cast<Index>(g.kernel_h * g.kernel_w * cin);
#pragma omp parallel for schedule(static)
  for (Index row = 0; row < rows; ++row) {
    const std::size_t ci = row % cin;
    const std::size_t kx = (row / cin) % g.kernel_w;
    const std::size_t ky = row / (cin * g.kernel_w);
    double* dk = dkernel.data() + row * cout;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
      if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
        if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
        const double xv = x[(iy * g.width + ix) * cin + ci];
        const double* go = dout.data() + (oy * ow + ox) * cout;
#pragma omp simd
        for (std::size_t co = 0; co < cout; ++co) dk[co] += xv * go[co];
      }
    }
  }
}

void bilinear_resize(CSpan x, Span out, const ResizeGeometry& g) {
  const auto ty = detail::resize_taps(g.height, g.out_height);
  const auto tx = detail::resize_taps(g.width, g.out_width);
  const std::size_t c = g.channels;
#pragma omp parallel for schedule(static)
  for (Index oy = 0; oy < static_cast<Index>(g.out_height); ++oy) {
    const double fy = ty[oy].frac;
    const double* r0 = x.data() + ty[oy].lo * g.width * c;
    const double* r1 = x.data() + ty[oy].hi * g.width * c;
    for (std::size_t ox = 0; ox < g.out_width; ++ox) {
      const double fx = tx[ox].frac;
      const std::size_t c0 = tx[ox].lo * c, c1 = tx[ox].hi * c;
      double* o = out.data() + (oy * g.out_width + ox) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        o[ch] = (1 - fy) * ((1 - fx) * r0[c0 + ch] + fx * r0[c1 + ch]) +
                fy * ((1 - fx) * r1[c0 + ch] + fx * r1[c1 + ch]);
      }
    }
  }
}

void bilinear_resize_backward(CSpan dout, Span dx, const ResizeGeometry& g) {
  const auto ty = detail::resize_taps(g.height, g.out_height);
  const auto tx = detail::resize_taps(g.width, g.out_width);
  const std::size_t c = g.channels;
  // Output rows feeding each input row, in ascending order.
  std::vector<std::vector<std::size_t>> feeders(g.height);
  for (std::size_t oy = 0; oy < g.out_height; ++oy) {
    feeders[ty[oy].lo].push_back(oy);
    if (ty[oy].hi != ty[oy].lo) feeders[ty[oy].hi].push_back(oy);
  }
#pragma omp parallel for schedule(static)
  for (Index iy = 0; iy < static_cast<Index>(g.height); ++iy) {
    double* drow = dx.data() + iy * g.width * c;
    for (std::size_t oy : feeders[iy]) {
      double wy = 0.0;
      if (ty[oy].lo == static_cast<std::size_t>(iy)) wy += 1 - ty[oy].frac;
      if (ty[oy].hi == static_cast<std::size_t>(iy)) wy += ty[oy].frac;
      for (std::size_t ox = 0; ox < g.out_width; ++ox) {
        const double* d = dout.data() + (oy * g.out_width + ox) * c;
        const double fx = tx[ox].frac;
        double* p0 = drow + tx[ox].lo * c;
        double* p1 = drow + tx[ox].hi * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          p0[ch] += wy * (1 - fx) * d[ch];
          p1[ch] += wy * fx * d[ch];
        }
      }
    }
  }
}

}  // namespace simmp::kernels
