#include "fctl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "fctl/kernels.hpp"

namespace fctl {

namespace {

using detail::make_result;
using detail::Node;

template <typename T>
void accumulate(Node<T>& target, const T* g) {
  if (!target.requires_grad) return;
  target.ensure_grad();
  const std::size_t n = target.grad.size();
  for (std::size_t i = 0; i < n; ++i) target.grad[i] += g[i];
}

template <typename T>
void require_rank(const Tensor<T>& x, int rank, const char* op, const char* what) {
  if (!x.defined()) throw ArgumentError(std::string(op) + ": undefined tensor " + what);
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + to_string(x.shape()));
  }
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ArgumentError(std::string(op) + ": axis " + std::to_string(axis) +
                        " invalid for rank " + std::to_string(rank));
  }
  return a;
}

struct AxisView {
  Index outer = 1;
  Index axis = 1;
  Index inner = 1;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  v.axis = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Index stride,
                 Index pad) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
  if (pad < 0) throw ArgumentError("conv2d: pad must be >= 0");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input channels (axis 1 of input, " + std::to_string(x.dim(1)) +
                         ") != weight axis 1 (" + std::to_string(w.dim(1)) + ")");
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != w.dim(0))) {
    throw DimensionError("conv2d: bias shape " + to_string(b.shape()) +
                         " does not match weight axis 0 (" + std::to_string(w.dim(0)) + ")");
  }
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.stride = stride;
  g.pad = pad;
  const Index span_h = g.height + 2 * pad - g.kernel_h;
  const Index span_w = g.width + 2 * pad - g.kernel_w;
  if (span_h < 0 || span_w < 0) {
    throw DimensionError("conv2d: kernel " + to_string(w.shape()) + " larger than padded input " +
                         to_string(x.shape()) + " on axes 2/3");
  }
  // Output size rounds down; trailing rows the last window cannot reach are unused.
  std::vector<T> out(static_cast<std::size_t>(g.batch * g.out_channels * g.out_height() * g.out_width()));
  kernels::conv2d_forward(g, x.data().data(), w.data().data(), has_bias ? b.data().data() : nullptr,
                          out.data());
  return make_result<T>(
      {g.batch, g.out_channels, g.out_height(), g.out_width()}, std::move(out), "conv2d",
      {&x, &w, has_bias ? &b : nullptr}, [g, has_bias](Node<T>& self) {
        Node<T>& xn = *self.inputs[0];
        Node<T>& wn = *self.inputs[1];
        Node<T>* bn = has_bias ? self.inputs[2].get() : nullptr;
        std::vector<T> dx(xn.requires_grad ? xn.data.size() : 0);
        std::vector<T> dw(wn.requires_grad ? wn.data.size() : 0);
        std::vector<T> db(bn && bn->requires_grad ? bn->data.size() : 0);
        kernels::conv2d_backward(g, xn.data.data(), wn.data.data(), self.grad.data(),
                                 dx.empty() ? nullptr : dx.data(), dw.empty() ? nullptr : dw.data(),
                                 db.empty() ? nullptr : db.data());
        if (!dx.empty()) accumulate(xn, dx.data());
        if (!dw.empty()) accumulate(wn, dw.data());
        if (!db.empty()) accumulate(*bn, db.data());
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, Index kernel, Index stride) {
  require_rank(x, 4, "max_pool2d", "input");
  if (kernel < 1 || stride < 1) throw ArgumentError("max_pool2d: kernel and stride must be >= 1");
  if (kernel > x.dim(2) || kernel > x.dim(3)) {
    throw DimensionError("max_pool2d: kernel " + std::to_string(kernel) +
                         " exceeds spatial axes 2/3 of " + to_string(x.shape()));
  }
  kernels::PoolGeometry g;
  g.planes = x.dim(0) * x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.kernel = kernel;
  g.stride = stride;
  const Index ho = g.out_height(), wo = g.out_width();
  std::vector<T> out(static_cast<std::size_t>(g.planes * ho * wo));
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  kernels::max_pool_forward(g, x.data().data(), out.data(), argmax->data());
  return make_result<T>({x.dim(0), x.dim(1), ho, wo}, std::move(out), "max_pool2d", {&x},
                        [g, argmax](Node<T>& self) {
                          Node<T>& xn = *self.inputs[0];
                          std::vector<T> dx(xn.data.size());
                          kernels::max_pool_backward(g, self.grad.data(), argmax->data(), dx.data());
                          accumulate(xn, dx.data());
                        });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, Index out_h, Index out_w) {
  require_rank(x, 4, "resize_bilinear", "input");
  if (out_h < 1 || out_w < 1) throw ArgumentError("resize_bilinear: output size must be >= 1");
  const Index planes = x.dim(0) * x.dim(1);
  const Index in_h = x.dim(2), in_w = x.dim(3);
  if (in_h == out_h && in_w == out_w) {
    return make_result<T>(x.shape(), std::vector<T>(x.data().begin(), x.data().end()),
                          "resize_bilinear", {&x}, [](Node<T>& self) {
                            accumulate(*self.inputs[0], self.grad.data());
                          });
  }
  std::vector<T> out(static_cast<std::size_t>(planes * out_h * out_w));
  kernels::resize_bilinear_forward(planes, in_h, in_w, out_h, out_w, x.data().data(), out.data());
  return make_result<T>({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), "resize_bilinear", {&x},
                        [planes, in_h, in_w, out_h, out_w](Node<T>& self) {
                          Node<T>& xn = *self.inputs[0];
                          std::vector<T> dx(xn.data.size());
                          kernels::resize_bilinear_backward(planes, in_h, in_w, out_h, out_w,
                                                            self.grad.data(), dx.data());
                          accumulate(xn, dx.data());
                        });
}

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, Index factor) {
  if (factor < 1) throw ArgumentError("upsample_bilinear: factor must be >= 1");
  require_rank(x, 4, "upsample_bilinear", "input");
  return resize_bilinear(x, x.dim(2) * factor, x.dim(3) * factor);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "softmax");
  const AxisView v = axis_view(x.shape(), a);
  std::vector<T> out(x.data().size());
  kernels::softmax_forward(v.outer, v.axis, v.inner, x.data().data(), out.data());
  return make_result<T>(x.shape(), std::move(out), "softmax", {&x}, [v](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    std::vector<T> dx(xn.data.size());
    kernels::softmax_backward(v.outer, v.axis, v.inner, self.data.data(), self.grad.data(), dx.data());
    accumulate(xn, dx.data());
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: lhs axis 1 (" + std::to_string(a.dim(1)) + ") != rhs axis 0 (" +
                         std::to_string(b.dim(0)) + ")");
  }
  const Index m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m * p));
  kernels::gemm(m, k, p, a.data().data(), b.data().data(), out.data());
  return make_result<T>({m, p}, std::move(out), "matmul", {&a, &b}, [m, k, p](Node<T>& self) {
    Node<T>& an = *self.inputs[0];
    Node<T>& bn = *self.inputs[1];
    if (an.requires_grad) {
      // dA = dC * B^T
      std::vector<T> bt(static_cast<std::size_t>(p * k)), da(static_cast<std::size_t>(m * k));
      kernels::transpose(k, p, bn.data.data(), bt.data());
      kernels::gemm(m, p, k, self.grad.data(), bt.data(), da.data());
      accumulate(an, da.data());
    }
    if (bn.requires_grad) {
      // dB = A^T * dC
      std::vector<T> at(static_cast<std::size_t>(k * m)), db(static_cast<std::size_t>(k * p));
      kernels::transpose(m, k, an.data.data(), at.data());
      kernels::gemm(k, m, p, at.data(), self.grad.data(), db.data());
      accumulate(bn, db.data());
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose", "input");
  const Index r = a.dim(0), c = a.dim(1);
  std::vector<T> out(a.data().size());
  kernels::transpose(r, c, a.data().data(), out.data());
  return make_result<T>({c, r}, std::move(out), "transpose", {&a}, [r, c](Node<T>& self) {
    std::vector<T> dx(static_cast<std::size_t>(r * c));
    kernels::transpose(c, r, self.grad.data(), dx.data());
    accumulate(*self.inputs[0], dx.data());
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ArgumentError("concat: empty input list");
  const int a = normalize_axis(axis, xs.front().rank(), "concat");
  Shape out_shape = xs.front().shape();
  out_shape[static_cast<std::size_t>(a)] = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape& s = xs[i].shape();
    if (s.size() != out_shape.size()) {
      throw DimensionError("concat: input " + std::to_string(i) + " rank differs: " + to_string(s));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != a && s[d] != xs.front().shape()[d]) {
        throw DimensionError("concat: input " + std::to_string(i) + " shape " + to_string(s) +
                             " differs from " + to_string(xs.front().shape()) + " on axis " +
                             std::to_string(d));
      }
    }
    out_shape[static_cast<std::size_t>(a)] += s[static_cast<std::size_t>(a)];
  }
  const AxisView ov = axis_view(out_shape, a);
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& x : xs) {
    offsets.push_back(offset);
    const Index len = x.dim(a);
    const auto src = x.data();
    for (Index o = 0; o < ov.outer; ++o) {
      std::copy_n(src.begin() + o * len * ov.inner, len * ov.inner,
                  out.begin() + (o * ov.axis + offset) * ov.inner);
    }
    offset += len;
  }
  return make_result<T>(out_shape, std::move(out), "concat", xs, [ov, offsets](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node<T>& in = *self.inputs[i];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      const Index len = static_cast<Index>(in.data.size()) / (ov.outer * ov.inner);
      for (Index o = 0; o < ov.outer; ++o) {
        const T* g = self.grad.data() + (o * ov.axis + offsets[i]) * ov.inner;
        T* d = in.grad.data() + o * len * ov.inner;
        for (Index j = 0; j < len * ov.inner; ++j) d[j] += g[j];
      }
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, Index begin, Index end) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  if (begin < 0 || end > x.dim(a) || begin >= end) {
    throw ArgumentError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") invalid for axis " + std::to_string(a) + " of " + to_string(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), a);
  const Index len = end - begin;
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(a)] = len;
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  const auto src = x.data();
  for (Index o = 0; o < v.outer; ++o) {
    std::copy_n(src.begin() + (o * v.axis + begin) * v.inner, len * v.inner,
                out.begin() + o * len * v.inner);
  }
  return make_result<T>(out_shape, std::move(out), "slice", {&x}, [v, begin, len](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (Index o = 0; o < v.outer; ++o) {
      const T* g = self.grad.data() + o * len * v.inner;
      T* d = in.grad.data() + (o * v.axis + begin) * v.inner;
      for (Index j = 0; j < len * v.inner; ++j) d[j] += g[j];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " cannot become " + to_string(shape));
  }
  return make_result<T>(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()),
                        "reshape", {&x},
                        [](Node<T>& self) { accumulate(*self.inputs[0], self.grad.data()); });
}

template <typename T>
Tensor<T> elementwise(Elementwise kind, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.defined()) throw ArgumentError("elementwise: undefined operand");
  const auto xa = a.data();
  if (kind == Elementwise::Relu) {
    std::vector<T> out(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) out[i] = xa[i] > T{0} ? xa[i] : T{0};
    return make_result<T>(a.shape(), std::move(out), "relu", {&a}, [](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      if (!in.requires_grad) return;
      in.ensure_grad();
      for (std::size_t i = 0; i < in.data.size(); ++i) {
        if (in.data[i] > T{0}) in.grad[i] += self.grad[i];
      }
    });
  }
  if (!b.defined()) throw ArgumentError("elementwise: binary kind needs two operands");
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.rank() == 1 && a.rank() == 4 && a.dim(1) == b.dim(0);
  if (!same && !bias) {
    throw DimensionError("elementwise: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " are neither equal nor [N,C,H,W] vs [C]");
  }
  const Index channels = bias ? a.dim(1) : 1;
  const Index inner = bias ? a.dim(2) * a.dim(3) : 1;
  auto b_index = [=](std::size_t i) -> std::size_t {
    return bias ? static_cast<std::size_t>((static_cast<Index>(i) / inner) % channels) : i;
  };
  const auto xb = b.data();
  std::vector<T> out(xa.size());
  const bool is_add = kind == Elementwise::Add;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    out[i] = is_add ? xa[i] + xb[b_index(i)] : xa[i] * xb[b_index(i)];
  }
  return make_result<T>(a.shape(), std::move(out), is_add ? "add" : "mul", {&a, &b},
                        [is_add, b_index](Node<T>& self) {
                          Node<T>& an = *self.inputs[0];
                          Node<T>& bn = *self.inputs[1];
                          const std::size_t n = self.grad.size();
                          if (an.requires_grad) {
                            an.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i) {
                              an.grad[i] += is_add ? self.grad[i] : self.grad[i] * bn.data[b_index(i)];
                            }
                          }
                          if (bn.requires_grad) {
                            bn.ensure_grad();
                            for (std::size_t i = 0; i < n; ++i) {
                              bn.grad[b_index(i)] += is_add ? self.grad[i] : self.grad[i] * an.data[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), "scale", {&x}, [factor](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T{0};
  for (T v : x.data()) acc += v;
  return make_result<T>({1}, {acc}, "sum", {&x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    in.ensure_grad();
    for (T& g : in.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> expand_channels(const Tensor<T>& x, Index channels) {
  require_rank(x, 4, "expand_channels", "input");
  if (x.dim(1) != 1) throw DimensionError("expand_channels: axis 1 must be 1, got " + to_string(x.shape()));
  if (channels < 1) throw ArgumentError("expand_channels: channels must be >= 1");
  const Index n = x.dim(0), plane = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(n * channels * plane));
  const auto src = x.data();
  for (Index b = 0; b < n; ++b)
    for (Index c = 0; c < channels; ++c)
      std::copy_n(src.begin() + b * plane, plane, out.begin() + (b * channels + c) * plane);
  return make_result<T>({n, channels, x.dim(2), x.dim(3)}, std::move(out), "expand_channels", {&x},
                        [n, channels, plane](Node<T>& self) {
                          Node<T>& in = *self.inputs[0];
                          if (!in.requires_grad) return;
                          in.ensure_grad();
                          for (Index b = 0; b < n; ++b)
                            for (Index c = 0; c < channels; ++c)
                              for (Index i = 0; i < plane; ++i)
                                in.grad[static_cast<std::size_t>(b * plane + i)] +=
                                    self.grad[static_cast<std::size_t>((b * channels + c) * plane + i)];
                        });
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::uint8_t> labels, double gamma,
                     std::uint8_t ignore_id) {
  require_rank(logits, 4, "focal_loss", "logits");
  const Index n = logits.dim(0), classes = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  if (static_cast<Index>(labels.size()) != n * plane) {
    throw DimensionError("focal_loss: " + std::to_string(labels.size()) + " labels for logits " +
                         to_string(logits.shape()));
  }
  if (gamma < 0) throw ArgumentError("focal_loss: gamma must be >= 0");
  static constexpr double kClamp = 1e-12;

  std::vector<T> prob(logits.data().size());
  kernels::softmax_forward(n, classes, plane, logits.data().data(), prob.data());

  Index counted = 0;
  double total = 0.0;
  for (Index b = 0; b < n; ++b) {
    for (Index i = 0; i < plane; ++i) {
      const std::uint8_t label = labels[static_cast<std::size_t>(b * plane + i)];
      if (label == ignore_id) continue;
      if (label >= classes) {
        throw ArgumentError("focal_loss: label " + std::to_string(label) + " >= num_classes " +
                            std::to_string(classes));
      }
      const double p = prob[static_cast<std::size_t>((b * classes + label) * plane + i)];
      total += -std::pow(1.0 - p, gamma) * std::log(std::max(p, kClamp));
      ++counted;
    }
  }
  if (counted == 0) throw ArgumentError("focal_loss: no valid pixels");
  const double loss = total / static_cast<double>(counted);

  std::vector<std::uint8_t> saved(labels.begin(), labels.end());
  auto probs = std::make_shared<std::vector<T>>(std::move(prob));
  return make_result<T>(
      {1}, {static_cast<T>(loss)}, "focal_loss", {&logits},
      [probs, saved = std::move(saved), n, classes, plane, gamma, ignore_id, counted](Node<T>& self) {
        Node<T>& in = *self.inputs[0];
        if (!in.requires_grad) return;
        in.ensure_grad();
        const double upstream = static_cast<double>(self.grad[0]) / static_cast<double>(counted);
        const std::vector<T>& pr = *probs;
        for (Index b = 0; b < n; ++b) {
          for (Index i = 0; i < plane; ++i) {
            const std::uint8_t label = saved[static_cast<std::size_t>(b * plane + i)];
            if (label == ignore_id) continue;
            const double p = pr[static_cast<std::size_t>((b * classes + label) * plane + i)];
            const double q = 1.0 - p;
            // d FL / d p_t, multiplied by p_t (chain through softmax gives p_t * (delta - p_j)).
            double term_pow = 0.0;
            if (gamma != 0.0 && q > 0.0) {
              term_pow = gamma * std::pow(q, gamma - 1.0) * p * std::log(std::max(p, kClamp));
            }
            const double term_log = p >= kClamp ? std::pow(q, gamma) : 0.0;
            const double dfl_dp_times_p = term_pow - term_log;
            for (Index c = 0; c < classes; ++c) {
              const std::size_t idx = static_cast<std::size_t>((b * classes + c) * plane + i);
              const double delta = (c == label) ? 1.0 : 0.0;
              in.grad[idx] += static_cast<T>(upstream * dfl_dp_times_p * (delta - pr[idx]));
            }
          }
        }
      });
}

#define FCTL_INSTANTIATE(T)                                                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Index, Index); \
  template Tensor<T> max_pool2d(const Tensor<T>&, Index, Index);                              \
  template Tensor<T> upsample_bilinear(const Tensor<T>&, Index);                              \
  template Tensor<T> resize_bilinear(const Tensor<T>&, Index, Index);                         \
  template Tensor<T> softmax(const Tensor<T>&, int);                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> transpose(const Tensor<T>&);                                             \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                              \
  template Tensor<T> slice(const Tensor<T>&, int, Index, Index);                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> elementwise(Elementwise, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> expand_channels(const Tensor<T>&, Index);                                \
  template Tensor<T> focal_loss(const Tensor<T>&, std::span<const std::uint8_t>, double,      \
                                std::uint8_t);

FCTL_INSTANTIATE(float)
FCTL_INSTANTIATE(double)
#undef FCTL_INSTANTIATE

}  // namespace fctl
