#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fctl/tensor.hpp"

namespace fctl {

// Differentiable forward ops. Every op records a backward closure when grad
// mode is on and an input requires grad; otherwise it is a pure function.

/// Zero-padded cross-correlation of x[N,Cin,H,W] with w[Cout,Cin,kh,kw] plus
/// optional per-channel bias b[Cout] (pass an undefined tensor for none).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Index stride = 1,
                 Index pad = 0);

/// Window maximum; gradient goes to the first (row-major) maximal element.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, Index kernel, Index stride);

/// Integer-factor bilinear upsampling with half-pixel sample centres.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, Index factor);

/// Bilinear resize of x[N,C,H,W] to [N,C,out_h,out_w], half-pixel centres.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, Index out_h, Index out_w);

/// Max-subtracted softmax along `axis` (negative axes count from the back).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Transpose of a rank-2 tensor.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis);

/// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, Index begin, Index end);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

enum class Elementwise { Add, Mul, Relu };

/// Binary kinds accept equal shapes, or b of shape [C] against a[N,C,H,W]
/// (bias pattern). Relu ignores b.
template <typename T>
Tensor<T> elementwise(Elementwise kind, const Tensor<T>& a, const Tensor<T>& b = {});

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Elementwise::Add, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(Elementwise::Mul, a, b);
}
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return elementwise(Elementwise::Relu, x);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Repeats x[N,1,H,W] along the channel axis to [N,channels,H,W].
template <typename T>
Tensor<T> expand_channels(const Tensor<T>& x, Index channels);

/// Mean over non-ignored pixels of -(1-p_t)^gamma * log(max(p_t, 1e-12)),
/// p = softmax over the channel axis of logits[N,C,H,W]. `labels` holds N*H*W
/// class ids. gamma = 0 is plain cross-entropy.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels, double gamma,
                     std::uint8_t ignore_id = 255);

}  // namespace fctl
