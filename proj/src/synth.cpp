#include "fctl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace fctl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::array<std::array<int, 3>, 5> kBaseColour = {{
    {88, 148, 72},    // terrain 0
    {152, 118, 74},   // terrain 1
    {182, 182, 188},  // compound (same look for classes 2 and 3)
    {182, 182, 188},
    {62, 62, 66},     // road
}};

struct Rect {
  Index y, x, h, w;
  bool intersects(const Rect& o, Index gap) const {
    return y - gap < o.y + o.h && o.y - gap < y + h && x - gap < o.x + o.w && o.x - gap < x + w;
  }
};

// Smooth random field from a coarse lattice with cosine interpolation.
std::vector<double> terrain_field(Index size, Index cell, std::mt19937_64& rng) {
  const Index n = size / cell + 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> lattice(static_cast<std::size_t>(n * n));
  for (double& v : lattice) v = u(rng);
  const double offset_y = u(rng) * static_cast<double>(cell);
  const double offset_x = u(rng) * static_cast<double>(cell);
  auto ease = [](double t) { return 0.5 - 0.5 * std::cos(t * 3.14159265358979323846); };
  std::vector<double> field(static_cast<std::size_t>(size * size));
  for (Index y = 0; y < size; ++y) {
    const double fy = (static_cast<double>(y) + offset_y) / static_cast<double>(cell);
    const Index iy = static_cast<Index>(fy);
    const double ty = ease(fy - static_cast<double>(iy));
    for (Index x = 0; x < size; ++x) {
      const double fx = (static_cast<double>(x) + offset_x) / static_cast<double>(cell);
      const Index ix = static_cast<Index>(fx);
      const double tx = ease(fx - static_cast<double>(ix));
      auto at = [&](Index a, Index b) { return lattice[static_cast<std::size_t>(a * n + b)]; };
      const double top = at(iy, ix) * (1 - tx) + at(iy, ix + 1) * tx;
      const double bot = at(iy + 1, ix) * (1 - tx) + at(iy + 1, ix + 1) * tx;
      field[static_cast<std::size_t>(y * size + x)] = top * (1 - ty) + bot * ty;
    }
  }
  return field;
}

// Fraction of terrain-1 pixels in the band of width `ring` around r (clipped to the image).
double ring_fraction(const LabelMap& terrain, const Rect& r, Index ring) {
  Index votes[2] = {0, 0};
  const Index y0 = std::max<Index>(0, r.y - ring), y1 = std::min(terrain.height, r.y + r.h + ring);
  const Index x0 = std::max<Index>(0, r.x - ring), x1 = std::min(terrain.width, r.x + r.w + ring);
  for (Index y = y0; y < y1; ++y)
    for (Index x = x0; x < x1; ++x) {
      if (y >= r.y && y < r.y + r.h && x >= r.x && x < r.x + r.w) continue;
      ++votes[terrain.at(y, x)];
    }
  return static_cast<double>(votes[1]) / static_cast<double>(std::max<Index>(1, votes[0] + votes[1]));
}

int ring_terrain(const LabelMap& terrain, const Rect& r, Index ring) { return ring_fraction(terrain, r, ring) > 0.5 ? 1 : 0; }

void render(const LabelMap& labels, std::uint64_t noise_seed, RgbImage& image) {
  for (Index y = 0; y < labels.height; ++y) {
    for (Index x = 0; x < labels.width; ++x) {
      const auto& base = kBaseColour[labels.at(y, x)];
      const std::uint64_t h = splitmix64(noise_seed ^ static_cast<std::uint64_t>(y * labels.width + x));
      for (int c = 0; c < 3; ++c) {
        const int noise = static_cast<int>((h >> (16 * c)) % 41) - 20;
        image.pixels[static_cast<std::size_t>((y * labels.width + x) * 3 + c)] =
            static_cast<std::uint8_t>(std::clamp(base[static_cast<std::size_t>(c)] + noise, 0, 255));
      }
    }
  }
}

Sample make_image(const SynthConfig& cfg, Index index) {
  const std::uint64_t image_seed = splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
  std::mt19937_64 rng(image_seed);
  const Index size = cfg.image_size;

  const auto field = terrain_field(size, cfg.cue_scale, rng);
  std::vector<double> sorted = field;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  LabelMap terrain(size, size);
  for (Index i = 0; i < size * size; ++i)
    terrain.labels[static_cast<std::size_t>(i)] = field[static_cast<std::size_t>(i)] > median ? 1 : 0;

  LabelMap labels = terrain;
  if (cfg.num_classes == 5) {
    std::uniform_int_distribution<Index> width_d(6, 10), pos_d(0, size - 1), len_d(size / 2, size);
    for (Index r = 0; r < cfg.roads_per_image; ++r) {
      const bool horizontal = (r % 2) == 0;
      const Index width = width_d(rng);
      const Index len = len_d(rng);
      const Index across = std::min(pos_d(rng), size - width);
      const Index along = std::uniform_int_distribution<Index>(0, size - len)(rng);
      for (Index a = along; a < along + len; ++a)
        for (Index b = across; b < across + width; ++b) {
          if (horizontal) labels.at(b, a) = 4;
          else labels.at(a, b) = 4;
        }
    }
  }

  std::vector<Rect> placed;
  std::uniform_int_distribution<Index> side_d(cfg.compound_min, cfg.compound_max);
  // A compound is accepted once its surrounding band is nearly pure in the
  // wanted terrain, so the cue in a 2x context is unambiguous.
  constexpr Index kMargin = 8, kRing = 24, kGap = 12;
  constexpr double kPurity = 0.85;
  for (Index k = 0; k < cfg.compounds_per_image; ++k) {
    const int want = static_cast<int>(k % 2);
    Rect best{-1, -1, 0, 0};
    for (int attempt = 0; attempt < 400; ++attempt) {
      const Index side = side_d(rng);
      if (side + 2 * kMargin > size) break;
      std::uniform_int_distribution<Index> at_d(kMargin, size - side - kMargin);
      const Rect r{at_d(rng), at_d(rng), side, side};
      if (std::any_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.intersects(o, kGap); })) continue;
      if (best.y < 0) best = r;
      const double f = ring_fraction(terrain, r, kRing);
      if ((want == 1 ? f : 1.0 - f) >= kPurity) {
        best = r;
        break;
      }
    }
    if (best.y < 0) continue;
    placed.push_back(best);
    const auto cls = static_cast<std::uint8_t>(2 + ring_terrain(terrain, best, kRing));
    for (Index y = best.y; y < best.y + best.h; ++y)
      for (Index x = best.x; x < best.x + best.w; ++x) labels.at(y, x) = cls;
  }

  Sample s;
  std::ostringstream id;
  id << std::setw(3) << std::setfill('0') << index;
  s.id = id.str();
  s.image = RgbImage(size, size);
  render(labels, image_seed, s.image);
  s.labels = std::move(labels);
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_classes != 4 && num_classes != 5) throw ArgumentError("synthetic data supports 4 or 5 classes");
  if (num_images < 1) throw ArgumentError("num_images must be >= 1");
  if (patch < 1 || image_size < patch) throw ArgumentError("image_size must be >= patch");
  if (cue_scale <= patch) throw ArgumentError("cue_scale must exceed the patch size");
  if (compound_min < patch || compound_max < compound_min) {
    throw ArgumentError("compound sides must satisfy patch <= compound_min <= compound_max");
  }
  if (compound_max + 16 > image_size) throw ArgumentError("compounds do not fit in the image");
}

Dataset synth_dataset(const SynthConfig& config) {
  config.validate();
  Dataset out;
  out.reserve(static_cast<std::size_t>(config.num_images));
  for (Index i = 0; i < config.num_images; ++i) out.push_back(make_image(config, i));
  return out;
}

Sample synth_compound_probe(const SynthConfig& config, int terrain, Index side) {
  config.validate();
  if (terrain != 0 && terrain != 1) throw ArgumentError("terrain must be 0 or 1");
  const Index size = config.image_size;
  if (side < 1 || side > size) throw ArgumentError("probe compound does not fit");
  LabelMap labels(size, size, static_cast<std::uint8_t>(terrain));
  const Index y0 = (size - side) / 2;
  for (Index y = y0; y < y0 + side; ++y)
    for (Index x = y0; x < y0 + side; ++x) labels.at(y, x) = static_cast<std::uint8_t>(2 + terrain);
  Sample s;
  s.id = "probe" + std::to_string(terrain);
  s.image = RgbImage(size, size);
  render(labels, splitmix64(config.seed), s.image);
  s.labels = std::move(labels);
  return s;
}

}  // namespace fctl

namespace fctl {

template <typename T>
Tensor<T> image_to_tensor(const RgbImage& image) {
  const Index plane = image.height * image.width;
  std::vector<T> data(static_cast<std::size_t>(3 * plane));
  for (Index i = 0; i < plane; ++i)
    for (Index c = 0; c < 3; ++c)
      data[static_cast<std::size_t>(c * plane + i)] =
          static_cast<T>(image.pixels[static_cast<std::size_t>(i * 3 + c)]) / T{255};
  return Tensor<T>({3, image.height, image.width}, std::move(data));
}

template Tensor<float> image_to_tensor(const RgbImage&);
template Tensor<double> image_to_tensor(const RgbImage&);

}  // namespace fctl
