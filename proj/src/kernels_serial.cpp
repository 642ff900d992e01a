#include <algorithm>
#include <cmath>
#include <vector>

#include "fctl/kernels.hpp"

namespace fctl::kernels {

namespace detail {

LinearTap bilinear_tap(Index out_coord, Index in_size, Index out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  double src = (static_cast<double>(out_coord) + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  Index i0 = static_cast<Index>(std::floor(src));
  if (i0 > in_size - 1) i0 = in_size - 1;
  const Index i1 = std::min(i0 + 1, in_size - 1);
  const double frac = (i1 == i0) ? 0.0 : src - static_cast<double>(i0);
  return {i0, i1, frac};
}

}  // namespace detail

namespace serial {

template <typename T>
void gemm(Index m, Index k, Index p, const T* a, const T* b, T* c) {
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < p; ++j) {
      T acc = T{0};
      for (Index q = 0; q < k; ++q) acc += a[i * k + q] * b[q * p + j];
      c[i * p + j] = acc;
    }
  }
}

template <typename T>
void transpose(Index rows, Index cols, const T* in, T* out) {
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const Index ho = g.out_height(), wo = g.out_width();
  for (Index n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.in_channels * g.height * g.width;
    T* yn = y + n * g.out_channels * ho * wo;
    for (Index co = 0; co < g.out_channels; ++co) {
      for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox) {
          T acc = T{0};
          for (Index ci = 0; ci < g.in_channels; ++ci) {
            for (Index ky = 0; ky < g.kernel_h; ++ky) {
              const Index iy = oy * g.stride - g.pad + ky;
              for (Index kx = 0; kx < g.kernel_w; ++kx) {
                const Index ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       xn[(ci * g.height + iy) * g.width + ix];
              }
            }
          }
          yn[(co * ho + oy) * wo + ox] = bias ? acc + bias[co] : acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db) {
  const Index ho = g.out_height(), wo = g.out_width();
  const Index in_plane = g.height * g.width;
  const Index out_plane = ho * wo;
  const Index ksz = g.kernel_h * g.kernel_w;

  if (db) {
    for (Index co = 0; co < g.out_channels; ++co) {
      T acc = T{0};
      for (Index n = 0; n < g.batch; ++n) {
        const T* d = dy + (n * g.out_channels + co) * out_plane;
        for (Index i = 0; i < out_plane; ++i) acc += d[i];
      }
      db[co] = acc;
    }
  }

  if (dw) {
    std::fill(dw, dw + g.out_channels * g.patch_size(), T{0});
    for (Index n = 0; n < g.batch; ++n) {
      const T* xn = x + n * g.in_channels * in_plane;
      const T* dyn = dy + n * g.out_channels * out_plane;
      for (Index co = 0; co < g.out_channels; ++co) {
        for (Index ci = 0; ci < g.in_channels; ++ci) {
          for (Index ky = 0; ky < g.kernel_h; ++ky) {
            for (Index kx = 0; kx < g.kernel_w; ++kx) {
              T acc = T{0};
              for (Index oy = 0; oy < ho; ++oy) {
                const Index iy = oy * g.stride - g.pad + ky;
                if (iy < 0 || iy >= g.height) continue;
                for (Index ox = 0; ox < wo; ++ox) {
                  const Index ix = ox * g.stride - g.pad + kx;
                  if (ix < 0 || ix >= g.width) continue;
                  acc += dyn[co * out_plane + oy * wo + ox] * xn[ci * in_plane + iy * g.width + ix];
                }
              }
              T& slot = dw[(co * g.in_channels + ci) * ksz + ky * g.kernel_w + kx];
              slot = n == 0 ? acc : slot + acc;
            }
          }
        }
      }
    }
  }

  if (dx) {
    std::fill(dx, dx + g.batch * g.in_channels * in_plane, T{0});
    for (Index n = 0; n < g.batch; ++n) {
      const T* dyn = dy + n * g.out_channels * out_plane;
      T* dxn = dx + n * g.in_channels * in_plane;
      for (Index ci = 0; ci < g.in_channels; ++ci) {
        for (Index ky = 0; ky < g.kernel_h; ++ky) {
          for (Index kx = 0; kx < g.kernel_w; ++kx) {
            for (Index oy = 0; oy < ho; ++oy) {
              const Index iy = oy * g.stride - g.pad + ky;
              for (Index ox = 0; ox < wo; ++ox) {
                const Index ix = ox * g.stride - g.pad + kx;
                T v = T{0};
                for (Index co = 0; co < g.out_channels; ++co) {
                  v += w[(co * g.in_channels + ci) * ksz + ky * g.kernel_w + kx] *
                       dyn[co * out_plane + oy * wo + ox];
                }
                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                dxn[ci * in_plane + iy * g.width + ix] += v;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* x, T* y, Index* argmax) {
  const Index ho = g.out_height(), wo = g.out_width();
  for (Index p = 0; p < g.planes; ++p) {
    const T* xp = x + p * g.height * g.width;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox) {
        Index best = (oy * g.stride) * g.width + ox * g.stride;
        for (Index ky = 0; ky < g.kernel; ++ky) {
          for (Index kx = 0; kx < g.kernel; ++kx) {
            const Index idx = (oy * g.stride + ky) * g.width + ox * g.stride + kx;
            if (xp[idx] > xp[best]) best = idx;
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
  std::fill(dx, dx + g.planes * g.height * g.width, T{0});
  for (Index p = 0; p < g.planes; ++p) {
    for (Index i = 0; i < ho * wo; ++i) {
      dx[p * g.height * g.width + argmax[p * ho * wo + i]] += dy[p * ho * wo + i];
    }
  }
}

template <typename T>
void resize_bilinear_forward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                             const T* x, T* y) {
  for (Index p = 0; p < planes; ++p) {
    const T* xp = x + p * in_h * in_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto ty = detail::bilinear_tap(oy, in_h, out_h);
      const T fy = static_cast<T>(ty.frac);
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto tx = detail::bilinear_tap(ox, in_w, out_w);
        const T fx = static_cast<T>(tx.frac);
        const T v = (T{1} - fy) * (T{1} - fx) * xp[ty.i0 * in_w + tx.i0] +
                    (T{1} - fy) * fx * xp[ty.i0 * in_w + tx.i1] +
                    fy * (T{1} - fx) * xp[ty.i1 * in_w + tx.i0] + fy * fx * xp[ty.i1 * in_w + tx.i1];
        y[(p * out_h + oy) * out_w + ox] = v;
      }
    }
  }
}

template <typename T>
void resize_bilinear_backward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                              const T* dy, T* dx) {
  std::fill(dx, dx + planes * in_h * in_w, T{0});
  for (Index p = 0; p < planes; ++p) {
    T* dxp = dx + p * in_h * in_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      const auto ty = detail::bilinear_tap(oy, in_h, out_h);
      const T fy = static_cast<T>(ty.frac);
      for (Index ox = 0; ox < out_w; ++ox) {
        const auto tx = detail::bilinear_tap(ox, in_w, out_w);
        const T fx = static_cast<T>(tx.frac);
        const T g = dy[(p * out_h + oy) * out_w + ox];
        dxp[ty.i0 * in_w + tx.i0] += (T{1} - fy) * (T{1} - fx) * g;
        dxp[ty.i0 * in_w + tx.i1] += (T{1} - fy) * fx * g;
        dxp[ty.i1 * in_w + tx.i0] += fy * (T{1} - fx) * g;
        dxp[ty.i1 * in_w + tx.i1] += fy * fx * g;
      }
    }
  }
}

template <typename T>
void softmax_forward(Index outer, Index axis, Index inner, const T* x, T* y) {
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

}  // namespace serial
}  // namespace fctl::kernels
