#include "simmp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "simmp/errors.hpp"
#include "simmp/kernels.hpp"

namespace simmp {

namespace {

// Gradient buffer of v, or nullptr when v takes no gradient.
Tensor* gbuf(const Var& v) {
  if (!v.requires_grad()) return nullptr;
  return &v.node()->grad_buffer();
}

void require_rank(const Var& v, std::size_t rank, const char* what) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(v.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y.add_inplace(b.value());
  return make_op(std::move(y), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a)) da->add_inplace(g);
    if (auto* db = gbuf(b)) db->add_inplace(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_op(std::move(y), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a)) da->add_inplace(g);
    if (auto* db = gbuf(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_op(std::move(y), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * b.value()[i];
    if (auto* db = gbuf(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * a.value()[i];
  });
}

Var scale(const Var& a, double s) {
  Tensor y = map_values(a.value(), [s](double v) { return v * s; });
  return make_op(std::move(y), {a}, [a, s](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * s;
  });
}

Var relu(const Var& x) {
  Tensor y = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return make_op(std::move(y), {x}, [x](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x.value()[i] > 0.0) (*dx)[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor y = map_values(x.value(), [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return make_op(std::move(y), {x}, [x](const Tensor& g, const Tensor& y) {
    if (auto* dx = gbuf(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var abs(const Var& x) {
  Tensor y = map_values(x.value(), [](double v) { return std::abs(v); });
  return make_op(std::move(y), {x}, [x](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x))
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = x.value()[i];
        (*dx)[i] += v > 0 ? g[i] : (v < 0 ? -g[i] : 0.0);
      }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t c = last_dim(x.value());
  if (bias.value().size() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  }
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias.value()[i % c];
  return make_op(std::move(y), {x, bias}, [x, bias, c](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x)) dx->add_inplace(g);
    if (auto* db = gbuf(bias))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i % c] += g[i];
  });
}

Var mul_lastdim(const Var& x, const Var& gate) {
  const std::size_t c = last_dim(x.value());
  if (gate.value().size() != c) {
    throw DimensionError("mul_lastdim: gate " + shape_str(gate.shape()) + " vs input " + shape_str(x.shape()));
  }
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= gate.value()[i % c];
  return make_op(std::move(y), {x, gate}, [x, gate, c](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * gate.value()[i % c];
    if (auto* dg = gbuf(gate))
      for (std::size_t i = 0; i < g.size(); ++i) (*dg)[i % c] += g[i] * x.value()[i];
  });
}

Var mul_broadcast_lastdim(const Var& x, const Var& gate) {
  const std::size_t c = last_dim(x.value());
  if (gate.value().size() * c != x.value().size() || last_dim(gate.value()) != 1) {
    throw DimensionError("mul_broadcast_lastdim: gate " + shape_str(gate.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= gate.value()[i / c];
  return make_op(std::move(y), {x, gate}, [x, gate, c](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * gate.value()[i / c];
    if (auto* dg = gbuf(gate))
      for (std::size_t i = 0; i < g.size(); ++i) (*dg)[i / c] += g[i] * x.value()[i];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_op(Tensor::scalar(s), {x}, [x](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x))
      for (auto& d : dx->data()) d += g[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1), p = b.value().dim(1);
  if (b.value().dim(0) != n) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Tensor y({m, p});
  kernels::gemm(a.value().data(), b.value().data(), y.data(), m, n, p, false);
  return make_op(std::move(y), {a, b}, [a, b, m, n, p](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a)) kernels::gemm_nt(g.data(), b.value().data(), da->data(), m, p, n, true);
    if (auto* db = gbuf(b)) kernels::gemm_tn(a.value().data(), g.data(), db->data(), m, n, p, true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1), p = b.value().dim(0);
  if (b.value().dim(1) != n) {
    throw DimensionError("matmul_nt: inner extents differ, " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor y({m, p});
  kernels::gemm_nt(a.value().data(), b.value().data(), y.data(), m, n, p, false);
  return make_op(std::move(y), {a, b}, [a, b, m, n, p](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a)) kernels::gemm(g.data(), b.value().data(), da->data(), m, p, n, true);
    if (auto* db = gbuf(b)) kernels::gemm_tn(g.data(), a.value().data(), db->data(), m, p, n, true);
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  Tensor y({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = a.value()[i * n + j];
  return make_op(std::move(y), {a}, [a, m, n](const Tensor& g, const Tensor&) {
    if (auto* da = gbuf(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*da)[i * n + j] += g[j * m + i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_op(std::move(y), {x}, [x](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x))
      for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i];
  });
}

Var softmax_lastdim(const Var& x) {
  const std::size_t cols = last_dim(x.value());
  const std::size_t rows = x.value().size() / cols;
  Tensor y(x.shape());
  kernels::softmax_rows(x.value().data(), y.data(), rows, cols);
  return make_op(std::move(y), {x}, [x, rows, cols](const Tensor& g, const Tensor& y) {
    if (auto* dx = gbuf(x)) kernels::softmax_rows_backward(y.data(), g.data(), dx->data(), rows, cols);
  });
}

Var masked_softmax_lastdim(const Var& x, const Tensor& mask) {
  require_same_shape(x.value(), mask, "masked_softmax_lastdim");
  const std::size_t cols = last_dim(x.value());
  const std::size_t rows = x.value().size() / cols;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().raw() + r * cols;
    const double* mr = mask.raw() + r * cols;
    double* yr = y.raw() + r * cols;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < cols; ++j)
      if (mr[j] != 0.0) mx = std::max(mx, xr[j]);
    if (mx == -INFINITY) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = mr[j] != 0.0 ? std::exp(xr[j] - mx) : 0.0;
      s += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= s;
  }
  // Masked entries have y = 0, so the plain softmax adjoint already vanishes there.
  return make_op(std::move(y), {x}, [x, rows, cols](const Tensor& g, const Tensor& y) {
    if (auto* dx = gbuf(x)) kernels::softmax_rows_backward(y.data(), g.data(), dx->data(), rows, cols);
  });
}

Var log_softmax_lastdim(const Var& x) {
  const std::size_t cols = last_dim(x.value());
  const std::size_t rows = x.value().size() / cols;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().raw() + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = xr[j] - lse;
  }
  return make_op(std::move(y), {x}, [x, rows, cols](const Tensor& g, const Tensor& y) {
    auto* dx = gbuf(x);
    if (!dx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        (*dx)[r * cols + j] += g[r * cols + j] - std::exp(y[r * cols + j]) * gs;
    }
  });
}

Var conv2d(const Var& x, const Var& kernel, std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  kernels::ConvGeometry geo;
  geo.height = x.value().dim(0);
  geo.width = x.value().dim(1);
  geo.in_channels = x.value().dim(2);
  geo.kernel_h = kernel.value().dim(0);
  geo.kernel_w = kernel.value().dim(1);
  geo.out_channels = kernel.value().dim(3);
  geo.stride = stride;
  geo.padding = padding;
  if (kernel.value().dim(2) != geo.in_channels) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " vs input " + shape_str(x.shape()));
  }
  if (geo.kernel_h % 2 == 0 || geo.kernel_w % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd");
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (geo.kernel_h > geo.height + 2 * padding || geo.kernel_w > geo.width + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  Tensor y({geo.out_height(), geo.out_width(), geo.out_channels});
  kernels::conv2d(x.value().data(), kernel.value().data(), y.data(), geo);
  return make_op(std::move(y), {x, kernel}, [x, kernel, geo](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x)) kernels::conv2d_backward_input(g.data(), kernel.value().data(), dx->data(), geo);
    if (auto* dk = gbuf(kernel)) kernels::conv2d_backward_kernel(x.value().data(), g.data(), dk->data(), geo);
  });
}

Var bilinear_resize(const Var& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: output extents must be positive");
  const std::size_t h = x.value().dim(0), w = x.value().dim(1), c = x.value().dim(2);
  if (h == out_h && w == out_w) return reshape(x, x.shape());
  kernels::ResizeGeometry geo{h, w, c, out_h, out_w};
  Tensor y({out_h, out_w, c});
  kernels::bilinear_resize(x.value().data(), y.data(), geo);
  return make_op(std::move(y), {x}, [x, geo](const Tensor& g, const Tensor&) {
    if (auto* dx = gbuf(x)) kernels::bilinear_resize_backward(g.data(), dx->data(), geo);
  });
}

std::vector<Var> window_partition(const Var& x, std::size_t window) {
  require_rank(x, 3, "window_partition");
  const std::size_t h = x.value().dim(0), w = x.value().dim(1), c = x.value().dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw DimensionError("window_partition: window " + std::to_string(window) + " does not divide " +
                         shape_str(x.shape()));
  }
  const std::size_t nwy = h / window, nwx = w / window;
  std::vector<Var> out;
  out.reserve(nwy * nwx);
  for (std::size_t wy = 0; wy < nwy; ++wy) {
    for (std::size_t wx = 0; wx < nwx; ++wx) {
      Tensor y({window, window, c});
      for (std::size_t r = 0; r < window; ++r) {
        const double* src = x.value().raw() + ((wy * window + r) * w + wx * window) * c;
        std::copy(src, src + window * c, y.raw() + r * window * c);
      }
      out.push_back(make_op(std::move(y), {x}, [x, wy, wx, window, w, c](const Tensor& g, const Tensor&) {
        auto* dx = gbuf(x);
        if (!dx) return;
        for (std::size_t r = 0; r < window; ++r) {
          double* dst = dx->raw() + ((wy * window + r) * w + wx * window) * c;
          const double* src = g.raw() + r * window * c;
          for (std::size_t i = 0; i < window * c; ++i) dst[i] += src[i];
        }
      }));
    }
  }
  return out;
}

Var window_merge(const std::vector<Var>& windows, std::size_t height, std::size_t width, std::size_t window) {
  if (window == 0 || height % window != 0 || width % window != 0) {
    throw DimensionError("window_merge: window " + std::to_string(window) + " does not divide " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t nwy = height / window, nwx = width / window;
  if (windows.size() != nwy * nwx) {
    throw DimensionError("window_merge: expected " + std::to_string(nwy * nwx) + " windows, got " +
                         std::to_string(windows.size()));
  }
  const std::size_t c = windows.front().value().rank() == 3 ? windows.front().value().dim(2) : 0;
  for (const auto& win : windows) {
    if (win.shape() != Shape{window, window, c}) {
      throw DimensionError("window_merge: window shape " + shape_str(win.shape()));
    }
  }
  Tensor y({height, width, c});
  for (std::size_t idx = 0; idx < windows.size(); ++idx) {
    const std::size_t wy = idx / nwx, wx = idx % nwx;
    for (std::size_t r = 0; r < window; ++r) {
      const double* src = windows[idx].value().raw() + r * window * c;
      std::copy(src, src + window * c, y.raw() + ((wy * window + r) * width + wx * window) * c);
    }
  }
  return make_op(std::move(y), windows, [windows, nwx, window, width, c](const Tensor& g, const Tensor&) {
    for (std::size_t idx = 0; idx < windows.size(); ++idx) {
      auto* dw = gbuf(windows[idx]);
      if (!dw) continue;
      const std::size_t wy = idx / nwx, wx = idx % nwx;
      for (std::size_t r = 0; r < window; ++r) {
        const double* src = g.raw() + ((wy * window + r) * width + wx * window) * c;
        double* dst = dw->raw() + r * window * c;
        for (std::size_t i = 0; i < window * c; ++i) dst[i] += src[i];
      }
    }
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t t = x.value().dim(0), c = x.value().dim(1);
  if (index.empty()) throw DimensionError("gather_rows: empty index");
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor y({idx.size(), c});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= t) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(x.value().raw() + idx[r] * c, c, y.raw() + r * c);
  }
  return make_op(std::move(y), {x}, [x, idx, c](const Tensor& g, const Tensor&) {
    auto* dx = gbuf(x);
    if (!dx) return;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) (*dx)[idx[r] * c + j] += g[r * c + j];
  });
}

Var scatter_rows(const Var& x, std::span<const std::size_t> index, std::size_t rows) {
  require_rank(x, 2, "scatter_rows");
  const std::size_t n = x.value().dim(0), c = x.value().dim(1);
  if (index.size() != n) throw DimensionError("scatter_rows: index length differs from row count");
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor y({rows, c});
  for (std::size_t r = 0; r < n; ++r) {
    if (idx[r] >= rows) throw DimensionError("scatter_rows: row index out of range");
    std::copy_n(x.value().raw() + r * c, c, y.raw() + idx[r] * c);
  }
  return make_op(std::move(y), {x}, [x, idx, c](const Tensor& g, const Tensor&) {
    auto* dx = gbuf(x);
    if (!dx) return;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += g[idx[r] * c + j];
  });
}

namespace {
Shape keep_last_one(const Shape& s) {
  Shape out = s;
  out.back() = 1;
  return out;
}
}  // namespace

Var mean_lastdim(const Var& x) {
  const std::size_t c = last_dim(x.value());
  const std::size_t rows = x.value().size() / c;
  Tensor y(keep_last_one(x.shape()));
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x.value()[r * c + j];
    y[r] = s / static_cast<double>(c);
  }
  return make_op(std::move(y), {x}, [x, rows, c](const Tensor& g, const Tensor&) {
    auto* dx = gbuf(x);
    if (!dx) return;
    const double inv = 1.0 / static_cast<double>(c);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += g[r] * inv;
  });
}

Var normalize_lastdim(const Var& x, double eps) {
  const std::size_t c = last_dim(x.value());
  const std::size_t rows = x.value().size() / c;
  const double inv_c = 1.0 / static_cast<double>(c);
  Tensor y(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().raw() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu *= inv_c;
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    inv_std[r] = 1.0 / std::sqrt(var * inv_c + eps);
    for (std::size_t j = 0; j < c; ++j) y[r * c + j] = (xr[j] - mu) * inv_std[r];
  }
  return make_op(std::move(y), {x}, [x, rows, c, inv_c, inv_std = std::move(inv_std)](const Tensor& g, const Tensor& y) {
    auto* dx = gbuf(x);
    if (!dx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g.raw() + r * c;
      const double* yr = y.raw() + r * c;
      double gm = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        gm += gr[j];
        gy += gr[j] * yr[j];
      }
      gm *= inv_c;
      gy *= inv_c;
      for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += inv_std[r] * (gr[j] - gm - yr[j] * gy);
    }
  });
}

Var max_lastdim(const Var& x) {
  const std::size_t c = last_dim(x.value());
  const std::size_t rows = x.value().size() / c;
  Tensor y(keep_last_one(x.shape()));
  std::vector<std::size_t> arg(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (x.value()[r * c + j] > x.value()[r * c + best]) best = j;
    arg[r] = best;
    y[r] = x.value()[r * c + best];
  }
  return make_op(std::move(y), {x}, [x, arg, c](const Tensor& g, const Tensor&) {
    auto* dx = gbuf(x);
    if (!dx) return;
    for (std::size_t r = 0; r < arg.size(); ++r) (*dx)[r * c + arg[r]] += g[r];
  });
}

Var concat_lastdim(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw DimensionError("concat_lastdim: " + shape_str(sa) + " vs " + shape_str(sb));
  }
  const std::size_t ca = sa.back(), cb = sb.back();
  const std::size_t rows = a.value().size() / ca;
  Shape so = sa;
  so.back() = ca + cb;
  Tensor y(so);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().raw() + r * ca, ca, y.raw() + r * (ca + cb));
    std::copy_n(b.value().raw() + r * cb, cb, y.raw() + r * (ca + cb) + ca);
  }
  return make_op(std::move(y), {a, b}, [a, b, rows, ca, cb](const Tensor& g, const Tensor&) {
    auto* da = gbuf(a);
    auto* db = gbuf(b);
    for (std::size_t r = 0; r < rows; ++r) {
      if (da)
        for (std::size_t j = 0; j < ca; ++j) (*da)[r * ca + j] += g[r * (ca + cb) + j];
      if (db)
        for (std::size_t j = 0; j < cb; ++j) (*db)[r * cb + j] += g[r * (ca + cb) + ca + j];
    }
  });
}

Var mean_over_positions(const Var& x) {
  const std::size_t c = last_dim(x.value());
  const std::size_t rows = x.value().size() / c;
  Tensor y({c});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) y[j] += x.value()[r * c + j];
  for (std::size_t j = 0; j < c; ++j) y[j] /= static_cast<double>(rows);
  return make_op(std::move(y), {x}, [x, rows, c](const Tensor& g, const Tensor&) {
    auto* dx = gbuf(x);
    if (!dx) return;
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) (*dx)[r * c + j] += g[j] * inv;
  });
}

Var max_over_positions(const Var& x) {
  const std::size_t c = last_dim(x.value());
  const std::size_t rows = x.value().size() / c;
  Tensor y({c});
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) y[j] = x.value()[j];
  for (std::size_t r = 1; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j)
      if (x.value()[r * c + j] > y[j]) {
        y[j] = x.value()[r * c + j];
        arg[j] = r;
      }
  return make_op(std::move(y), {x}, [x, arg, c](const Tensor& g, const Tensor&) {
    auto* dx = gbuf(x);
    if (!dx) return;
    for (std::size_t j = 0; j < c; ++j) (*dx)[arg[j] * c + j] += g[j];
  });
}

Var broadcast_columns(const Var& v, std::size_t cols) {
  require_rank(v, 2, "broadcast_columns");
  if (v.value().dim(1) != 1) throw DimensionError("broadcast_columns: expected n x 1, got " + shape_str(v.shape()));
  const std::size_t n = v.value().dim(0);
  Tensor y({n, cols});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = v.value()[i];
  return make_op(std::move(y), {v}, [v, n, cols](const Tensor& g, const Tensor&) {
    auto* dv = gbuf(v);
    if (!dv) return;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) s += g[i * cols + j];
      (*dv)[i] += s;
    }
  });
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEps);
}

}  // namespace simmp
