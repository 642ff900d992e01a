#pragma once

// Raw-buffer compute kernels behind the differentiable ops.
//
// Two implementations share every signature:
//   fctl::kernels          OpenMP-parallel (im2col + register-blocked GEMM)
//   fctl::kernels::serial  direct nested loops, the reference for tests/bench
//
// The parallel kernels partition work over output rows/planes only, so every
// output element is produced by one thread with a fixed summation order.
// Results are therefore independent of the thread count, and equal to the
// serial reference value-for-value (fp contraction is disabled for both).

#include "fctl/tensor.hpp"

namespace fctl::kernels {

struct ConvGeometry {
  Index batch = 1;
  Index in_channels = 1;
  Index height = 1;
  Index width = 1;
  Index out_channels = 1;
  Index kernel_h = 1;
  Index kernel_w = 1;
  Index stride = 1;
  Index pad = 0;

  Index out_height() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  Index out_width() const { return (width + 2 * pad - kernel_w) / stride + 1; }
  Index patch_size() const { return in_channels * kernel_h * kernel_w; }
};

struct PoolGeometry {
  Index planes = 1;  // N*C
  Index height = 1;
  Index width = 1;
  Index kernel = 2;
  Index stride = 2;

  Index out_height() const { return (height - kernel) / stride + 1; }
  Index out_width() const { return (width - kernel) / stride + 1; }
};

// C[M,P] = A[M,K] * B[K,P]  (C overwritten)
template <typename T>
void gemm(Index m, Index k, Index p, const T* a, const T* b, T* c);

template <typename T>
void transpose(Index rows, Index cols, const T* in, T* out);

// y[N,Cout,Ho,Wo] = conv(x, w) + bias; bias may be null.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

// Overwrites dx, dw, db (any may be null to skip).
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db);

// argmax receives the flat in-plane index of the chosen element (first on ties).
template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* x, T* y, Index* argmax);

// Overwrites dx.
template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* dy, const Index* argmax, T* dx);

// Half-pixel-centre bilinear resampling of `planes` independent planes.
template <typename T>
void resize_bilinear_forward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                             const T* x, T* y);

// Overwrites dx.
template <typename T>
void resize_bilinear_backward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                              const T* dy, T* dx);

// Softmax over the middle axis of an [outer, axis, inner] view.
template <typename T>
void softmax_forward(Index outer, Index axis, Index inner, const T* x, T* y);

// Overwrites dx.
template <typename T>
void softmax_backward(Index outer, Index axis, Index inner, const T* y, const T* dy, T* dx);

namespace serial {

template <typename T>
void gemm(Index m, Index k, Index p, const T* a, const T* b, T* c);
template <typename T>
void transpose(Index rows, Index cols, const T* in, T* out);
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db);
template <typename T>
void max_pool_forward(const PoolGeometry& g, const T* x, T* y, Index* argmax);
template <typename T>
void max_pool_backward(const PoolGeometry& g, const T* dy, const Index* argmax, T* dx);
template <typename T>
void resize_bilinear_forward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                             const T* x, T* y);
template <typename T>
void resize_bilinear_backward(Index planes, Index in_h, Index in_w, Index out_h, Index out_w,
                              const T* dy, T* dx);
template <typename T>
void softmax_forward(Index outer, Index axis, Index inner, const T* x, T* y);
template <typename T>
void softmax_backward(Index outer, Index axis, Index inner, const T* y, const T* dy, T* dx);

}  // namespace serial

namespace detail {

// Source taps for one output coordinate of a half-pixel bilinear resize.
struct LinearTap {
  Index i0;
  Index i1;
  double frac;
};

LinearTap bilinear_tap(Index out_coord, Index in_size, Index out_size);

}  // namespace detail

}  // namespace fctl::kernels
