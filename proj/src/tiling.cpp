#include "fctl/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fctl/kernels.hpp"

namespace fctl {

namespace {

std::vector<Index> plan_axis(Index extent, Index patch, Index stride) {
  // n = ceil((extent - patch) / stride) + 1
  const Index n = (extent - patch + stride - 1) / stride + 1;
  std::vector<Index> starts(static_cast<std::size_t>(n));
  for (Index i = 0; i + 1 < n; ++i) starts[static_cast<std::size_t>(i)] = i * stride;
  starts.back() = extent - patch;
  return starts;
}

Index place_axis(Index start, Index patch, Index side, Index extent) {
  // Centred placement (odd margins rounded toward the origin), then clamped.
  const Index origin = start - (side - patch) / 2;
  return std::clamp<Index>(origin, 0, extent - side);
}

template <typename T>
void validate_results(std::span<const PatchResult<T>> results, const PatchGrid& grid,
                      std::vector<const Tensor<T>*>& by_index, Index& channels) {
  by_index.assign(static_cast<std::size_t>(grid.count()), nullptr);
  channels = -1;
  for (const auto& [index, prob] : results) {
    if (index < 0 || index >= grid.count()) {
      throw CompletenessError("patch index " + std::to_string(index) + " outside grid of " +
                              std::to_string(grid.count()));
    }
    if (by_index[static_cast<std::size_t>(index)]) {
      throw CompletenessError("duplicate result for patch " + std::to_string(index));
    }
    if (prob.rank() != 3 || prob.dim(1) != grid.patch || prob.dim(2) != grid.patch) {
      throw DimensionError("patch result " + std::to_string(index) + " has shape " +
                           to_string(prob.shape()) + ", expected [C," + std::to_string(grid.patch) +
                           "," + std::to_string(grid.patch) + "]");
    }
    if (channels < 0) channels = prob.dim(0);
    if (prob.dim(0) != channels) throw DimensionError("patch results disagree on channel count");
    by_index[static_cast<std::size_t>(index)] = &prob;
  }
  for (Index i = 0; i < grid.count(); ++i) {
    if (!by_index[static_cast<std::size_t>(i)]) {
      throw CompletenessError("missing result for patch " + std::to_string(i));
    }
  }
}

std::vector<Index> nearest_owner(const std::vector<Index>& starts, Index patch, Index extent) {
  std::vector<Index> owner(static_cast<std::size_t>(extent));
  for (Index p = 0; p < extent; ++p) {
    Index best = 0;
    Index best_dist = -1;
    for (std::size_t i = 0; i < starts.size(); ++i) {
      // Doubled coordinates keep pixel centres (p + 0.5) and patch centres integral.
      const Index dist = std::abs((2 * p + 1) - (2 * starts[i] + patch));
      if (best_dist < 0 || dist < best_dist) {
        best_dist = dist;
        best = static_cast<Index>(i);
      }
    }
    const Index s = starts[static_cast<std::size_t>(best)];
    if (p < s || p >= s + patch) throw GeometryError("nearest patch does not cover pixel");
    owner[static_cast<std::size_t>(p)] = best;
  }
  return owner;
}

}  // namespace

PatchGrid plan_grid(Index image_h, Index image_w, Index patch, Index overlap) {
  if (patch < 1) throw GeometryError("patch size must be >= 1");
  if (overlap < 0 || overlap >= patch) {
    throw GeometryError("overlap " + std::to_string(overlap) + " must lie in [0, patch)");
  }
  if (patch > image_h || patch > image_w) {
    throw GeometryError("patch " + std::to_string(patch) + " exceeds image " +
                        std::to_string(image_h) + "x" + std::to_string(image_w));
  }
  PatchGrid g;
  g.image_h = image_h;
  g.image_w = image_w;
  g.patch = patch;
  g.overlap = overlap;
  g.starts_y = plan_axis(image_h, patch, patch - overlap);
  g.starts_x = plan_axis(image_w, patch, patch - overlap);
  return g;
}

ContextScale ContextScale::scaled(double lambda) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) {
    throw ArgumentError("context lambda must be a finite value >= 1");
  }
  return {lambda, false};
}

std::string ContextScale::to_string() const {
  if (global) return "g";
  std::ostringstream os;
  os << lambda;
  return os.str();
}

ContextScale ContextScale::parse(const std::string& text) {
  if (text == "g" || text == "G" || text == "global") return whole_image();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ArgumentError("bad context scale '" + text + "'");
  }
  if (used != text.size()) throw ArgumentError("bad context scale '" + text + "'");
  return scaled(v);
}

ContextWindow context_window(const PatchGrid& grid, Index patch_index, ContextScale scale) {
  if (patch_index < 0 || patch_index >= grid.count()) {
    throw GeometryError("patch index " + std::to_string(patch_index) + " outside grid");
  }
  ContextWindow win;
  win.scale = scale;
  if (scale.global) {
    win.h = grid.image_h;
    win.w = grid.image_w;
    return win;
  }
  const Index side = static_cast<Index>(std::llround(scale.lambda * static_cast<double>(grid.patch)));
  if (side > std::min(grid.image_h, grid.image_w)) {
    throw GeometryError("context side " + std::to_string(side) + " (lambda " + scale.to_string() +
                        ") exceeds the image; use the GLOBAL context instead");
  }
  win.h = win.w = side;
  win.y0 = place_axis(grid.y(patch_index), grid.patch, side, grid.image_h);
  win.x0 = place_axis(grid.x(patch_index), grid.patch, side, grid.image_w);
  return win;
}

LabelMap crop_labels(const LabelMap& map, Index y0, Index x0, Index h, Index w) {
  if (y0 < 0 || x0 < 0 || y0 + h > map.height || x0 + w > map.width) {
    throw GeometryError("label crop outside map");
  }
  LabelMap out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) out.at(y, x) = map.at(y0 + y, x0 + x);
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& raster, Index y0, Index x0, Index h, Index w) {
  if (raster.rank() != 3) throw DimensionError("crop: raster must be [C,H,W], got " + to_string(raster.shape()));
  const Index c = raster.dim(0), rh = raster.dim(1), rw = raster.dim(2);
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > rh || x0 + w > rw) {
    throw GeometryError("crop (" + std::to_string(y0) + "," + std::to_string(x0) + ")+" +
                        std::to_string(h) + "x" + std::to_string(w) + " outside raster " +
                        to_string(raster.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(c * h * w));
  const auto src = raster.data();
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      std::copy_n(src.begin() + (ch * rh + y0 + y) * rw + x0, w, out.begin() + (ch * h + y) * w);
  return Tensor<T>({c, h, w}, std::move(out));
}

template <typename T>
Tensor<T> extract_context(const Tensor<T>& raster, const ContextWindow& win, Index out) {
  Tensor<T> region = crop(raster, win.y0, win.x0, win.h, win.w);
  if (win.h == out && win.w == out) return region;
  const Index c = region.dim(0);
  std::vector<T> resized(static_cast<std::size_t>(c * out * out));
  kernels::resize_bilinear_forward(c, win.h, win.w, out, out, region.data().data(), resized.data());
  return Tensor<T>({c, out, out}, std::move(resized));
}

template <typename T>
Tensor<T> merge_average(std::span<const PatchResult<T>> results, const PatchGrid& grid) {
  std::vector<const Tensor<T>*> by_index;
  Index channels = 0;
  validate_results(results, grid, by_index, channels);
  const Index h = grid.image_h, w = grid.image_w, p = grid.patch;
  std::vector<T> acc(static_cast<std::size_t>(channels * h * w), T{0});
  std::vector<std::int32_t> count(static_cast<std::size_t>(h * w), 0);
  for (Index idx = 0; idx < grid.count(); ++idx) {
    const auto src = by_index[static_cast<std::size_t>(idx)]->data();
    const Index y0 = grid.y(idx), x0 = grid.x(idx);
    for (Index y = 0; y < p; ++y)
      for (Index x = 0; x < p; ++x) ++count[static_cast<std::size_t>((y0 + y) * w + x0 + x)];
    for (Index c = 0; c < channels; ++c)
      for (Index y = 0; y < p; ++y) {
        T* dst = acc.data() + (c * h + y0 + y) * w + x0;
        const T* s = src.data() + (c * p + y) * p;
        for (Index x = 0; x < p; ++x) dst[x] += s[x];
      }
  }
  for (Index c = 0; c < channels; ++c)
    for (Index i = 0; i < h * w; ++i)
      acc[static_cast<std::size_t>(c * h * w + i)] /= static_cast<T>(count[static_cast<std::size_t>(i)]);
  return Tensor<T>({channels, h, w}, std::move(acc));
}

std::vector<Index> montage_owners(const PatchGrid& grid) {
  const auto oy = nearest_owner(grid.starts_y, grid.patch, grid.image_h);
  const auto ox = nearest_owner(grid.starts_x, grid.patch, grid.image_w);
  std::vector<Index> owners(static_cast<std::size_t>(grid.image_h * grid.image_w));
  for (Index y = 0; y < grid.image_h; ++y)
    for (Index x = 0; x < grid.image_w; ++x)
      owners[static_cast<std::size_t>(y * grid.image_w + x)] =
          oy[static_cast<std::size_t>(y)] * grid.cols() + ox[static_cast<std::size_t>(x)];
  return owners;
}

template <typename T>
Tensor<T> montage(std::span<const PatchResult<T>> results, const PatchGrid& grid) {
  std::vector<const Tensor<T>*> by_index;
  Index channels = 0;
  validate_results(results, grid, by_index, channels);
  const Index h = grid.image_h, w = grid.image_w, p = grid.patch;
  const auto owners = montage_owners(grid);
  std::vector<T> out(static_cast<std::size_t>(channels * h * w));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index owner = owners[static_cast<std::size_t>(y * w + x)];
      const auto src = by_index[static_cast<std::size_t>(owner)]->data();
      const Index ly = y - grid.y(owner), lx = x - grid.x(owner);
      for (Index c = 0; c < channels; ++c)
        out[static_cast<std::size_t>((c * h + y) * w + x)] = src[static_cast<std::size_t>((c * p + ly) * p + lx)];
    }
  }
  return Tensor<T>({channels, h, w}, std::move(out));
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& prob) {
  if (prob.rank() != 3) throw DimensionError("argmax_labels: expected [C,H,W], got " + to_string(prob.shape()));
  const Index c = prob.dim(0), h = prob.dim(1), w = prob.dim(2);
  if (c > 255) throw ArgumentError("argmax_labels: more than 255 classes");
  LabelMap out(h, w);
  const auto d = prob.data();
  for (Index i = 0; i < h * w; ++i) {
    Index best = 0;
    for (Index k = 1; k < c; ++k)
      if (d[static_cast<std::size_t>(k * h * w + i)] > d[static_cast<std::size_t>(best * h * w + i)]) best = k;
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
Tensor<T> one_hot(const LabelMap& labels, Index classes, std::uint8_t ignore_id) {
  const Index h = labels.height, w = labels.width;
  std::vector<T> out(static_cast<std::size_t>(classes * h * w), T{0});
  for (Index i = 0; i < h * w; ++i) {
    const std::uint8_t l = labels.labels[static_cast<std::size_t>(i)];
    if (l == ignore_id) {
      for (Index k = 0; k < classes; ++k) out[static_cast<std::size_t>(k * h * w + i)] = T{1} / static_cast<T>(classes);
      continue;
    }
    if (l >= classes) throw ArgumentError("one_hot: label " + std::to_string(l) + " >= classes");
    out[static_cast<std::size_t>(l * h * w + i)] = T{1};
  }
  return Tensor<T>({classes, h, w}, std::move(out));
}

#define FCTL_INSTANTIATE(T)                                                                     \
  template Tensor<T> crop(const Tensor<T>&, Index, Index, Index, Index);                        \
  template Tensor<T> extract_context(const Tensor<T>&, const ContextWindow&, Index);            \
  template Tensor<T> merge_average(std::span<const PatchResult<T>>, const PatchGrid&);          \
  template Tensor<T> montage(std::span<const PatchResult<T>>, const PatchGrid&);                \
  template LabelMap argmax_labels(const Tensor<T>&);                                            \
  template Tensor<T> one_hot(const LabelMap&, Index, std::uint8_t);

FCTL_INSTANTIATE(float)
FCTL_INSTANTIATE(double)
#undef FCTL_INSTANTIATE

}  // namespace fctl
