#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fctl/kernels.hpp"

namespace fctl::kernels {

namespace {

// Register tile: kRows rows of C by one 64-byte-aligned-width column panel.
constexpr Index kRows = 4;
template <typename T>
constexpr Index kCols = 128 / static_cast<Index>(sizeof(T));

template <typename T>
inline void gemm_tile_full(Index k, Index p, const T* a, const T* b, T* c) {
  constexpr Index NC = kCols<T>;
  T acc[kRows][NC] = {};
  for (Index q = 0; q < k; ++q) {
    const T* brow = b + q * p;
    const T a0 = a[0 * k + q], a1 = a[1 * k + q], a2 = a[2 * k + q], a3 = a[3 * k + q];
#pragma omp simd
    for (Index j = 0; j < NC; ++j) {
      const T bv = brow[j];
      acc[0][j] += a0 * bv;
      acc[1][j] += a1 * bv;
      acc[2][j] += a2 * bv;
      acc[3][j] += a3 * bv;
    }
  }
  for (Index r = 0; r < kRows; ++r)
    for (Index j = 0; j < NC; ++j) c[r * p + j] = acc[r][j];
}

template <typename T>
inline void gemm_tile_edge(Index rows, Index cols, Index k, Index p, const T* a, const T* b, T* c) {
  constexpr Index NC = kCols<T>;
  T acc[kRows][NC] = {};
  for (Index q = 0; q < k; ++q) {
    const T* brow = b + q * p;
    for (Index r = 0; r < rows; ++r) {
      const T av = a[r * k + q];
      for (Index j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (Index r = 0; r < rows; ++r)
    for (Index j = 0; j < cols; ++j) c[r * p + j] = acc[r][j];
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const Index ho = g.out_height(), wo = g.out_width();
  const Index rows = g.patch_size();
#pragma omp parallel for schedule(static)
  for (Index row = 0; row < rows; ++row) {
    const Index kx = row % g.kernel_w;
    const Index ky = (row / g.kernel_w) % g.kernel_h;
    const Index ci = row / (g.kernel_w * g.kernel_h);
    const T* plane = x + ci * g.height * g.width;
    T* out = col + row * ho * wo;
    for (Index oy = 0; oy < ho; ++oy) {
      const Index iy = oy * g.stride - g.pad + ky;
      T* orow = out + oy * wo;
      if (iy < 0 || iy >= g.height) {
        std::fill(orow, orow + wo, T{0});
        continue;
      }
      const T* irow = plane + iy * g.width;
      for (Index ox = 0; ox < wo; ++ox) {
        const Index ix = ox * g.stride - g.pad + kx;
        orow[ox] = (ix < 0 || ix >= g.width) ? T{0} : irow[ix];
      }
    }
  }
}

// Accumulates col rows back into image planes; one thread per input channel.
template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* x) {
  const Index ho = g.out_height(), wo = g.out_width();
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < g.in_channels; ++ci) {
    T* plane = x + ci * g.height * g.width;
    for (Index ky = 0; ky < g.kernel_h; ++ky) {
      for (Index kx = 0; kx < g.kernel_w; ++kx) {
        const T* crow = col + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.width) continue;
            plane[iy * g.width + ix] += crow[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(Index m, Index k, Index p, const T* a, const T* b, T* c) {
  constexpr Index NC = kCols<T>;
  const Index row_blocks = (m + kRows - 1) / kRows;
#pragma omp parallel for schedule(static)
  for (Index rb = 0; rb < row_blocks; ++rb) {
    const Index i0 = rb * kRows;
    const Index rows = std::min(kRows, m - i0);
    for (Index j0 = 0; j0 < p; j0 += NC) {
      const Index cols = std::min(NC, p - j0);
      if (rows == kRows && cols == NC) {
        gemm_tile_full(k, p, a + i0 * k, b + j0, c + i0 * p + j0);
      } else {
        gemm_tile_edge(rows, cols, k, p, a + i0 * k, b + j0, c + i0 * p + j0);
      }
    }
  }
}

template <typename T>
void transpose(Index rows, Index cols, const T* in, T* out) {
  constexpr Index B = 32;
#pragma omp parallel for schedule(static)
  for (Index c0 = 0; c0 < cols; c0 += B) {
    for (Index r0 = 0; r0 < rows; r0 += B) {
      const Index r1 = std::min(rows, r0 + B), c1 = std::min(cols, c0 + B);
      for (Index c = c0; c < c1; ++c)
        for (Index r = r0; r < r1; ++r) out[c * rows + r] = in[r * cols + c];
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const Index ho = g.out_height(), wo = g.out_width();
  const Index plane = ho * wo;
  const bool pointwise = g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(g.patch_size() * plane));
  for (Index n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.in_channels * g.height * g.width;
    T* yn = y + n * g.out_channels * plane;
    const T* src = xn;
    if (!pointwise) {
      im2col(g, xn, col.data());
      src = col.data();
    }
    gemm(g.out_channels, g.patch_size(), plane, w, src, yn);
    if (bias) {
#pragma omp parallel for schedule(static)
      for (Index co = 0; co < g.out_channels; ++co) {
        T* row = yn + co * plane;
        const T bv = bias[co];
        for (Index i = 0; i < plane; ++i) row[i] = row[i] + bv;
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db) {
  const Index ho = g.out_height(), wo = g.out_width();
  const Index plane = ho * wo;
  const Index in_plane = g.height * g.width;
  const Index ksize = g.patch_size();
  const bool pointwise = g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;

  if (db) {
#pragma omp parallel for schedule(static)
    for (Index co = 0; co < g.out_channels; ++co) {
      T acc = T{0};
      for (Index n = 0; n < g.batch; ++n) {
        const T* d = dy + (n * g.out_channels + co) * plane;
        for (Index i = 0; i < plane; ++i) acc += d[i];
      }
      db[co] = acc;
    }
  }

  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ksize * plane));
  std::vector<T> colT(dw ? static_cast<std::size_t>(ksize * plane) : 0);
  std::vector<T> partial(dw ? static_cast<std::size_t>(g.out_channels * ksize) : 0);
  std::vector<T> wT(dx ? static_cast<std::size_t>(ksize * g.out_channels) : 0);
  std::vector<T> dcol(dx ? static_cast<std::size_t>(ksize * plane) : 0);
  if (dx) {
    transpose(g.out_channels, ksize, w, wT.data());
    std::fill(dx, dx + g.batch * g.in_channels * in_plane, T{0});
  }

  for (Index n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.in_channels * in_plane;
    const T* dyn = dy + n * g.out_channels * plane;
    if (dw) {
      const T* src = xn;
      if (!pointwise) {
        im2col(g, xn, col.data());
        src = col.data();
      }
      transpose(ksize, plane, src, colT.data());
      T* target = n == 0 ? dw : partial.data();
      gemm(g.out_channels, plane, ksize, dyn, colT.data(), target);
      if (n > 0) {
        const Index total = g.out_channels * ksize;
#pragma omp parallel for schedule(static)
        for (Index i = 0; i < total; ++i) dw[i] = dw[i] + partial[i];
      }
    }
    if (dx) {
      T* dxn = dx + n * g.in_channels * in_plane;
      if (pointwise) {
        gemm(ksize, g.out_channels, plane, wT.data(), dyn, dcol.data());
        const Index total = g.in_channels * in_plane;
#pragma omp parallel for schedule(static)
        for (Index i = 0; i < total; ++i) dxn[i] += dcol[i];
      } else {
        gemm(ksize, g.out_channels, plane, wT.data(), dyn, dcol.data());
        col2im_add(g, dcol.data(), dxn);
      }
    }
  }
}

template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* x, T* y, Index* argmax) {
  const Index ho = g.out_height(), wo = g.out_width();
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < g.planes; ++p) {
    const T* xp = x + p * g.height * g.width;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox) {
        Index best = (oy * g.stride) * g.width + ox * g.stride;
        for (Index ky = 0; ky < g.kernel; ++ky) {
          const Index base = (oy * g.stride + ky) * g.width + ox * g.stride;
          for (Index kx = 0; kx < g.kernel; ++kx) {
            if (xp[base + kx] > xp[best]) best = base + kx;
          }
        }
        y[(p * ho + oy) * wo + ox] = xp[best];
        argmax[(p * ho + oy) * wo + ox] = best;
      }
    }
  }
}

template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* dy, const Index* argmax, T* dx) {
  const Index ho = g.out_height(), wo = g.out_width();
  const Index in_plane = g.height * g.width;
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < g.planes; ++p) {
    T* dxp = dx + p * in_plane;
    std::fill(dxp, dxp + in_plane, T{0});
    for (Index i = 0; i < ho * wo; ++i) dxp[argmax[p * ho * wo + i]] += dy[p * ho * wo + i];
  }
}

template <typename T>
void resize_bilinear_forward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                             const T* x, T* y) {
  std::vector<detail::LinearTap> ty(static_cast<std::size_t>(out_h)), tx(static_cast<std::size_t>(out_w));
  for (Index i = 0; i < out_h; ++i) ty[static_cast<std::size_t>(i)] = detail::bilinear_tap(i, in_h, out_h);
  for (Index i = 0; i < out_w; ++i) tx[static_cast<std::size_t>(i)] = detail::bilinear_tap(i, in_w, out_w);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    const T* xp = x + p * in_h * in_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto& ry = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(ry.frac);
      const T* r0 = xp + ry.i0 * in_w;
      const T* r1 = xp + ry.i1 * in_w;
      T* out = y + (p * out_h + oy) * out_w;
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto& rx = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(rx.frac);
        out[ox] = (T{1} - fy) * (T{1} - fx) * r0[rx.i0] + (T{1} - fy) * fx * r0[rx.i1] +
                  fy * (T{1} - fx) * r1[rx.i0] + fy * fx * r1[rx.i1];
      }
    }
  }
}

template <typename T>
void resize_bilinear_backward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                              const T* dy, T* dx) {
  std::vector<detail::LinearTap> ty(static_cast<std::size_t>(out_h)), tx(static_cast<std::size_t>(out_w));
  for (Index i = 0; i < out_h; ++i) ty[static_cast<std::size_t>(i)] = detail::bilinear_tap(i, in_h, out_h);
  for (Index i = 0; i < out_w; ++i) tx[static_cast<std::size_t>(i)] = detail::bilinear_tap(i, in_w, out_w);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < planes; ++p) {
    T* dxp = dx + p * in_h * in_w;
    std::fill(dxp, dxp + in_h * in_w, T{0});
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto& ry = ty[static_cast<std::size_t>(oy)];
      const T fy = static_cast<T>(ry.frac);
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto& rx = tx[static_cast<std::size_t>(ox)];
        const T fx = static_cast<T>(rx.frac);
        const T g = dy[(p * out_h + oy) * out_w + ox];
        dxp[ry.i0 * in_w + rx.i0] += (T{1} - fy) * (T{1} - fx) * g;
        dxp[ry.i0 * in_w + rx.i1] += (T{1} - fy) * fx * g;
        dxp[ry.i1 * in_w + rx.i0] += fy * (T{1} - fx) * g;
        dxp[ry.i1 * in_w + rx.i1] += fy * fx * g;
      }
    }
  }
}

template <typename T>
void softmax_forward(Index outer, Index axis, Index inner, const T* x, T* y) {
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const T* xs = x + o * axis * inner + in;
      T* ys = y + o * axis * inner + in;
      T mx = xs[0];
      for (Index a = 1; a < axis; ++a) mx = std::max(mx, xs[a * inner]);
      T sum = T{0};
      for (Index a = 0; a < axis; ++a) {
        ys[a * inner] = std::exp(xs[a * inner] - mx);
        sum += ys[a * inner];
      }
      for (Index a = 0; a < axis; ++a) ys[a * inner] /= sum;
    }
  }
}

template <typename T>
void softmax_backward(Index outer, Index axis, Index inner, const T* y, const T* dy, T* dx) {
#pragma omp parallel for schedule(static)
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * axis * inner + in;
      T dot = T{0};
      for (Index a = 0; a < axis; ++a) dot += y[base + a * inner] * dy[base + a * inner];
      for (Index a = 0; a < axis; ++a)
        dx[base + a * inner] = y[base + a * inner] * (dy[base + a * inner] - dot);
    }
  }
}

#define FCTL_INSTANTIATE(T)                                                                  \
  template void gemm<T>(Index, Index, Index, const T*, const T*, T*);                        \
  template void transpose<T>(Index, Index, const T*, T*);                                    \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);    \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*,    \
                                   T*, T*);                                                  \
  template void max_pool_forward<T>(const PoolGeometry&, const T*, T*, Index*);              \
  template void max_pool_backward<T>(const PoolGeometry&, const T*, const Index*, T*);       \
  template void resize_bilinear_forward<T>(Index, Index, Index, Index, Index, const T*, T*); \
  template void resize_bilinear_backward<T>(Index, Index, Index, Index, Index, const T*, T*); \
  template void softmax_forward<T>(Index, Index, Index, const T*, T*);                       \
  template void softmax_backward<T>(Index, Index, Index, const T*, const T*, T*);

FCTL_INSTANTIATE(float)
FCTL_INSTANTIATE(double)
#undef FCTL_INSTANTIATE

}  // namespace fctl::kernels
