#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fctl/tensor.hpp"
#include "fctl/tiling.hpp"

namespace fctl {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;  // (y * width + x) * 3 + channel

  RgbImage() = default;
  RgbImage(Index h, Index w) : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), 0) {}
  bool operator==(const RgbImage&) const = default;
};

struct Sample {
  std::string id;
  RgbImage image;
  LabelMap labels;
};

using Dataset = std::vector<Sample>;

/// [3,H,W] tensor with values v/255.
template <typename T>
Tensor<T> image_to_tensor(const RgbImage& image);

}  // namespace fctl
