#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "fctl/error.hpp"
#include "fctl/ops.hpp"
#include "fctl/tiling.hpp"

using namespace fctl;
using D = Tensor<double>;

namespace {

void check_grid_invariants(const PatchGrid& g) {
  for (const auto* starts : {&g.starts_y, &g.starts_x}) {
    const Index extent = starts == &g.starts_y ? g.image_h : g.image_w;
    REQUIRE_FALSE(starts->empty());
    CHECK(starts->front() == 0);
    CHECK(starts->back() + g.patch == extent);
    for (std::size_t i = 1; i < starts->size(); ++i) {
      CHECK((*starts)[i] > (*starts)[i - 1]);
      CHECK((*starts)[i] - (*starts)[i - 1] <= g.stride());
    }
    CHECK(*starts == oracle::minimal_cover(extent, g.patch, g.overlap));
    // Coverage by direct scan.
    std::vector<int> covered(static_cast<std::size_t>(extent), 0);
    for (Index s : *starts)
      for (Index i = s; i < s + g.patch; ++i) covered[static_cast<std::size_t>(i)] = 1;
    CHECK(std::count(covered.begin(), covered.end(), 1) == extent);
  }
}

// Per-patch one-hot crops of a label map.
std::vector<PatchResult<double>> one_hot_patches(const LabelMap& labels, const PatchGrid& g, Index classes) {
  const D full = one_hot<double>(labels, classes);
  std::vector<PatchResult<double>> out;
  for (Index i = 0; i < g.count(); ++i) out.emplace_back(i, crop(full, g.y(i), g.x(i), g.patch, g.patch));
  return out;
}

LabelMap random_labels(Index h, Index w, Index classes, std::mt19937_64& rng) {
  LabelMap m(h, w);
  for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng() % static_cast<std::uint64_t>(classes));
  return m;
}

}  // namespace

TEST_CASE("plan_grid examples") {
  const auto big = plan_grid(2448, 2448, 508, 120);
  CHECK(big.starts_y == std::vector<Index>{0, 388, 776, 1164, 1552, 1940});
  CHECK(big.starts_x == big.starts_y);
  CHECK(big.count() == 36);
  check_grid_invariants(big);

  const auto single = plan_grid(64, 64, 64, 16);
  CHECK(single.count() == 1);
  CHECK(single.y(0) == 0);
  CHECK(single.x(0) == 0);

  CHECK(plan_grid(100, 100, 64, 16).starts_y == std::vector<Index>{0, 36});
  CHECK_THROWS_AS(plan_grid(50, 100, 64, 16), GeometryError);
  CHECK_THROWS_AS(plan_grid(100, 100, 64, 64), GeometryError);
  CHECK_THROWS_AS(plan_grid(100, 100, 64, -1), GeometryError);
}

TEST_CASE("plan_grid invariants over random geometries") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const Index patch = 1 + static_cast<Index>(rng() % 64);
    const Index overlap = static_cast<Index>(rng() % static_cast<std::uint64_t>(patch));
    const Index h = patch + static_cast<Index>(rng() % 300), w = patch + static_cast<Index>(rng() % 300);
    check_grid_invariants(plan_grid(h, w, patch, overlap));
  }
}

TEST_CASE("context_window examples") {
  const auto g = plan_grid(256, 256, 64, 16);  // starts 0,48,96,144,192
  const Index interior = 2 * g.cols() + 2;      // (96,96)
  REQUIRE(g.y(interior) == 96);
  const auto w2 = context_window(g, interior, ContextScale::scaled(2));
  CHECK(w2.y0 == 64);
  CHECK(w2.x0 == 64);
  CHECK(w2.h == 128);
  CHECK(w2.w == 128);
  const auto corner = context_window(g, 0, ContextScale::scaled(2));
  CHECK(corner.y0 == 0);
  CHECK(corner.x0 == 0);
  CHECK(corner.h == 128);
  const auto glob = context_window(g, 7, ContextScale::whole_image());
  CHECK(glob.y0 == 0);
  CHECK(glob.x0 == 0);
  CHECK(glob.h == 256);
  CHECK(glob.w == 256);
  const auto unit = context_window(g, interior, ContextScale::scaled(1));
  CHECK(unit.y0 == 96);
  CHECK(unit.h == 64);
  CHECK_THROWS_WITH_AS(context_window(g, 0, ContextScale::scaled(5)), doctest::Contains("GLOBAL"), GeometryError);
}

TEST_CASE("context_window stays inside the image and contains its patch") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 300; ++i) {
    const Index patch = 4 + static_cast<Index>(rng() % 40);
    const Index overlap = static_cast<Index>(rng() % static_cast<std::uint64_t>(patch));
    const Index h = patch + static_cast<Index>(rng() % 200), w = patch + static_cast<Index>(rng() % 200);
    const auto g = plan_grid(h, w, patch, overlap);
    const double max_lambda = static_cast<double>(std::min(h, w)) / static_cast<double>(patch);
    const double lambda = 1.0 + std::uniform_real_distribution<double>(0, max_lambda - 1.0)(rng);
    const ContextScale s = ContextScale::scaled(lambda);
    for (Index k = 0; k < g.count(); k += 1 + static_cast<Index>(rng() % 3)) {
      const auto win = context_window(g, k, s);
      CHECK(win.y0 >= 0);
      CHECK(win.x0 >= 0);
      CHECK(win.y0 + win.h <= h);
      CHECK(win.x0 + win.w <= w);
      CHECK(win.y0 <= g.y(k));
      CHECK(win.x0 <= g.x(k));
      CHECK(win.y0 + win.h >= g.y(k) + patch);
      CHECK(win.x0 + win.w >= g.x(k) + patch);
    }
  }
}

TEST_CASE("extract_context") {
  std::mt19937_64 rng(13);
  const D raster = oracle::random_tensor({3, 32, 32}, rng);
  const auto g = plan_grid(32, 32, 8, 2);
  for (Index k = 0; k < g.count(); ++k) {
    const auto win = context_window(g, k, ContextScale::scaled(1));
    CHECK(oracle::values(extract_context(raster, win, 8)) == oracle::values(crop(raster, g.y(k), g.x(k), 8, 8)));
  }
  const D flat = D::full({2, 32, 32}, 0.375);
  const D resized = extract_context(flat, context_window(g, 5, ContextScale::scaled(3)), 8);
  for (double v : resized.data())
    CHECK(v == doctest::Approx(0.375).epsilon(1e-15));

  for (int i = 0; i < 20; ++i) {
    const D r = oracle::random_tensor({1, 16, 16}, rng);
    const ContextWindow win{static_cast<Index>(rng() % 9), static_cast<Index>(rng() % 9), 8, 8, ContextScale::scaled(1)};
    const auto out = extract_context(r, win, 4);
    const auto ref = oracle::resize(oracle::values(crop(r, win.y0, win.x0, 8, 8)), 1, 8, 8, 4, 4);
    CHECK(oracle::max_abs_diff(oracle::values(out), ref) <= 1e-6);
  }
  CHECK_THROWS_AS(extract_context(raster, ContextWindow{30, 0, 8, 8, {}}, 8), GeometryError);
}

TEST_CASE("merge_average") {
  std::mt19937_64 rng(17);
  SUBCASE("one-hot round trip, any overlap") {
    for (Index overlap : {0, 1, 5, 9}) {
      const LabelMap labels = random_labels(37, 29, 4, rng);
      const auto g = plan_grid(37, 29, 10, overlap);
      CHECK(argmax_labels(merge_average<double>(one_hot_patches(labels, g, 4), g)) == labels);
      CHECK(argmax_labels(montage<double>(one_hot_patches(labels, g, 4), g)) == labels);
    }
  }
  SUBCASE("two overlapping contributions average") {
    const auto g = plan_grid(4, 6, 4, 2);  // x starts 0, 2
    REQUIRE(g.count() == 2);
    std::vector<PatchResult<double>> parts{{0, D::full({1, 4, 4}, 0.2)}, {1, D::full({1, 4, 4}, 0.6)}};
    const D m = merge_average<double>(parts, g);
    CHECK(m.at({0, 0, 0}) == doctest::Approx(0.2));
    CHECK(m.at({0, 1, 2}) == doctest::Approx(0.4));
    CHECK(m.at({0, 3, 5}) == doctest::Approx(0.6));
  }
  SUBCASE("random grids vs accumulator oracle; simplex preserved") {
    for (int i = 0; i < 30; ++i) {
      const Index patch = 3 + static_cast<Index>(rng() % 8);
      const Index overlap = static_cast<Index>(rng() % static_cast<std::uint64_t>(patch));
      const Index h = patch + static_cast<Index>(rng() % 20), w = patch + static_cast<Index>(rng() % 20);
      const auto g = plan_grid(h, w, patch, overlap);
      std::vector<PatchResult<double>> parts;
      for (Index k = 0; k < g.count(); ++k)
        parts.emplace_back(k, reshape(softmax(oracle::random_tensor({1, 3, patch, patch}, rng, -3, 3), 1), {3, patch, patch}));
      const D m = merge_average<double>(parts, g);
      CHECK(oracle::max_abs_diff(oracle::values(m), oracle::merge_average(parts, g, 3)) <= 1e-6);
      CHECK(oracle::max_abs_diff(oracle::values(montage<double>(parts, g)), oracle::montage(parts, g, 3)) == 0.0);
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          CHECK(std::abs(m.at({0, y, x}) + m.at({1, y, x}) + m.at({2, y, x}) - 1.0) <= 1e-5);
      // Order of the given results does not matter.
      std::shuffle(parts.begin(), parts.end(), rng);
      CHECK(oracle::values(merge_average<double>(parts, g)) == oracle::values(m));
    }
  }
  SUBCASE("missing or duplicate patches") {
    const auto g = plan_grid(8, 8, 4, 0);
    std::vector<PatchResult<double>> parts{{0, D::zeros({1, 4, 4})}, {1, D::zeros({1, 4, 4})}, {2, D::zeros({1, 4, 4})}};
    CHECK_THROWS_AS(merge_average<double>(parts, g), CompletenessError);
    CHECK_THROWS_AS(montage<double>(parts, g), CompletenessError);
    parts.emplace_back(2, D::zeros({1, 4, 4}));
    CHECK_THROWS_AS(merge_average<double>(parts, g), CompletenessError);
  }
}

TEST_CASE("montage") {
  std::mt19937_64 rng(19);
  SUBCASE("zero overlap equals merge_average") {
    const auto g = plan_grid(12, 16, 4, 0);
    std::vector<PatchResult<double>> parts;
    for (Index k = 0; k < g.count(); ++k) parts.emplace_back(k, oracle::random_tensor({2, 4, 4}, rng));
    CHECK(oracle::values(montage<double>(parts, g)) == oracle::values(merge_average<double>(parts, g)));
  }
  SUBCASE("overlap band split at the midpoint") {
    const auto g = plan_grid(8, 12, 8, 4);  // x starts 0, 4; overlap columns 4..7
    std::vector<PatchResult<double>> parts{{0, D::full({1, 8, 8}, 1.0)}, {1, D::full({1, 8, 8}, 2.0)}};
    const D m = montage<double>(parts, g);
    const std::vector<double> expect{1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
    for (Index x = 0; x < 12; ++x) CHECK(m.at({0, 3, x}) == expect[static_cast<std::size_t>(x)]);
  }
}

TEST_CASE("one_hot marks ignore pixels uniform") {
  LabelMap m(1, 2);
  m.labels = {1, kIgnoreLabel};
  const D oh = one_hot<double>(m, 4);
  CHECK(oh.at({1, 0, 0}) == 1.0);
  CHECK(oh.at({0, 0, 1}) == 0.25);
}
