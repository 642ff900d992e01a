#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fctl/tensor.hpp"

namespace fctl {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Square patch tiling of an image. Patches are indexed row-major.
struct PatchGrid {
  Index image_h = 0;
  Index image_w = 0;
  Index patch = 0;
  Index overlap = 0;
  std::vector<Index> starts_y;
  std::vector<Index> starts_x;

  Index rows() const { return static_cast<Index>(starts_y.size()); }
  Index cols() const { return static_cast<Index>(starts_x.size()); }
  Index count() const { return rows() * cols(); }
  Index stride() const { return patch - overlap; }
  Index y(Index index) const { return starts_y.at(static_cast<std::size_t>(index / cols())); }
  Index x(Index index) const { return starts_x.at(static_cast<std::size_t>(index % cols())); }
};

/// Minimal set of stride-spaced starts covering each axis, last start flush
/// with the border.
PatchGrid plan_grid(Index image_h, Index image_w, Index patch, Index overlap);

/// Context scale: a factor lambda >= 1 applied to the patch side, or the whole image.
struct ContextScale {
  double lambda = 1.0;
  bool global = false;

  static ContextScale scaled(double lambda);
  static ContextScale whole_image() { return {1.0, true}; }
  std::string to_string() const;  // "2", "1.5", or "g"
  static ContextScale parse(const std::string& text);
  bool operator==(const ContextScale&) const = default;
};

struct ContextWindow {
  Index y0 = 0;
  Index x0 = 0;
  Index h = 0;
  Index w = 0;
  ContextScale scale;
};

/// Square of side round(lambda*patch) centred on the patch, then translated the
/// minimal distance needed to lie inside the image. GLOBAL gives the whole image.
ContextWindow context_window(const PatchGrid& grid, Index patch_index, ContextScale scale);

struct LabelMap {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> labels;  // row-major

  LabelMap() = default;
  LabelMap(Index h, Index w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h * w), fill) {}
  std::uint8_t at(Index y, Index x) const { return labels[static_cast<std::size_t>(y * width + x)]; }
  std::uint8_t& at(Index y, Index x) { return labels[static_cast<std::size_t>(y * width + x)]; }
  bool operator==(const LabelMap&) const = default;
};

LabelMap crop_labels(const LabelMap& map, Index y0, Index x0, Index h, Index w);

// Rasters and probability maps are [C,H,W] tensors; no graph is recorded.

template <typename T>
Tensor<T> crop(const Tensor<T>& raster, Index y0, Index x0, Index h, Index w);

/// Crop of `win` bilinearly resized to out x out (exact crop when sizes match).
template <typename T>
Tensor<T> extract_context(const Tensor<T>& raster, const ContextWindow& win, Index out);

template <typename T>
using PatchResult = std::pair<Index, Tensor<T>>;

/// Per-pixel mean of all patch results covering the pixel. Contributions are
/// summed in grid order regardless of the order given.
template <typename T>
Tensor<T> merge_average(std::span<const PatchResult<T>> results, const PatchGrid& grid);

/// Each pixel copied from the patch whose centre is nearest (lowest index on ties).
template <typename T>
Tensor<T> montage(std::span<const PatchResult<T>> results, const PatchGrid& grid);

/// Owner patch index per pixel used by montage.
std::vector<Index> montage_owners(const PatchGrid& grid);

template <typename T>
LabelMap argmax_labels(const Tensor<T>& prob);

/// One-hot [C,H,W] map; ignore pixels get the uniform distribution.
template <typename T>
Tensor<T> one_hot(const LabelMap& labels, Index classes, std::uint8_t ignore_id = kIgnoreLabel);

}  // namespace fctl
