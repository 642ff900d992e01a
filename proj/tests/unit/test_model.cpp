#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "fctl/error.hpp"
#include "fctl/model.hpp"
#include "fctl/ops.hpp"

using namespace fctl;
using D = Tensor<double>;

namespace {

SegModelConfig small_seg(std::vector<ContextScale> contexts) {
  SegModelConfig c;
  c.num_classes = 3;
  c.patch = 16;
  c.enc_channels = {4, 6, 8};
  c.squeeze_channels = 8;
  c.dec_channels = {8, 4};
  c.contexts = std::move(contexts);
  return c;
}

std::vector<ContextScale> lambdas(std::initializer_list<double> ls) {
  std::vector<ContextScale> out;
  for (double l : ls) out.push_back(ContextScale::scaled(l));
  return out;
}

void zero_all(ParameterSet<double>& ps) {
  for (auto& e : ps.entries())
    for (double& v : e.tensor.mutable_data()) v = 0.0;
}

}  // namespace

TEST_CASE("encoder shape and siamese weights") {
  const SegModel<double> m(small_seg(lambdas({1, 2})), 3);
  std::mt19937_64 rng(1);
  const D x = oracle::random_tensor({1, 3, 16, 16}, rng);
  const D f = m.encode(x);
  CHECK(f.shape() == Shape{1, 8, 4, 4});
  // One encoder for every stream: the same input gives the same features.
  CHECK(oracle::values(m.encode(x)) == oracle::values(f));
  for (const auto& e : m.params().entries()) CHECK(e.name.find("context") == std::string::npos);
  CHECK_THROWS_AS(m.encode(oracle::random_tensor({1, 3, 12, 16}, rng)), DimensionError);
}

TEST_CASE("lcc examples") {
  // Orthogonal one-hot features: each pixel attends mostly to itself.
  const D a = D::of({1, 2, 1, 2}, {5, 0, 0, 5});
  const D r = relevance_map(a, a);
  const double self = 1.0 / (1.0 + std::exp(-25.0));
  CHECK(r.at({0, 0}) == doctest::Approx(self));
  CHECK(r.at({0, 1}) == doctest::Approx(1 - self));
  // Equal context features give a uniform map and the mean as output.
  const D flat = D::full({1, 2, 1, 3}, 1.0);
  const D b = D::of({1, 2, 1, 3}, {1, 2, 3, 4, 5, 6});
  const D out = lcc(b, flat, Aggregate::Context);
  for (Index i = 0; i < 3; ++i) {
    CHECK(out.at({0, 0, 0, i}) == doctest::Approx(1.0));
    CHECK(out.at({0, 1, 0, i}) == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(lcc(b, D::zeros({1, 2, 1, 2})), DimensionError);
}

TEST_CASE("lcc matches the quadratic oracle") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 40; ++i) {
    const Index c = 1 + static_cast<Index>(rng() % 6), h = 1 + static_cast<Index>(rng() % 8),
                w = 1 + static_cast<Index>(rng() % 8);
    const D a = oracle::random_tensor({1, c, h, w}, rng, -2, 2), b = oracle::random_tensor({1, c, h, w}, rng, -2, 2);
    for (Aggregate agg : {Aggregate::Local, Aggregate::Context}) {
      const auto ref = oracle::lcc(oracle::values(a), oracle::values(b), c, h * w, agg == Aggregate::Local);
      CHECK(oracle::max_abs_diff(oracle::values(lcc(a, b, agg)), ref) <= 1e-10);
    }
    const D r = relevance_map(a, b);
    for (Index row = 0; row < h * w; ++row) {
      double s = 0;
      for (Index col = 0; col < h * w; ++col) s += r.at({row, col});
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("fuse") {
  std::mt19937_64 rng(3);
  const Index c = 3, h = 2, w = 3, s = 4;
  SUBCASE("one input passes through") {
    const D f = oracle::random_tensor({1, c, h, w}, rng);
    const auto res = fuse<double>({f}, oracle::random_tensor({s, c, 1, 1}, rng), oracle::random_tensor({s}, rng),
                                  oracle::random_tensor({1, s, 1, 1}, rng), oracle::random_tensor({1}, rng));
    CHECK(oracle::max_abs_diff(oracle::values(res.fused), oracle::values(f)) <= 1e-15);
    for (double v : res.weights.data()) CHECK(v == 1.0);
  }
  SUBCASE("zero split weights reduce to the average") {
    const std::vector<D> fs{oracle::random_tensor({1, c, h, w}, rng), oracle::random_tensor({1, c, h, w}, rng)};
    const auto res = fuse<double>(fs, oracle::random_tensor({s, 2 * c, 1, 1}, rng), oracle::random_tensor({s}, rng),
                                  D::zeros({2, s, 1, 1}), D::zeros({2}));
    const auto avg = fuse<double>(fs, {}, {}, {}, {}, FusionMode::Average);
    CHECK(oracle::max_abs_diff(oracle::values(res.fused), oracle::values(avg.fused)) <= 1e-15);
  }
  SUBCASE("oracle, simplex weights and convex bound") {
    for (int i = 0; i < 30; ++i) {
      const Index t = 1 + static_cast<Index>(rng() % 4);
      std::vector<D> fs;
      std::vector<oracle::Vec> fv;
      for (Index k = 0; k < t; ++k) {
        fs.push_back(oracle::random_tensor({1, c, h, w}, rng, -3, 3));
        fv.push_back(oracle::values(fs.back()));
      }
      const D sw = oracle::random_tensor({s, t * c, 1, 1}, rng), sb = oracle::random_tensor({s}, rng);
      const D pw = oracle::random_tensor({t, s, 1, 1}, rng, -2, 2), pb = oracle::random_tensor({t}, rng);
      oracle::Vec wref;
      const auto ref = oracle::fuse(fv, c, h * w, oracle::values(sw), oracle::values(sb), oracle::values(pw),
                                    oracle::values(pb), s, &wref);
      const auto res = fuse(fs, sw, sb, pw, pb);
      CHECK(oracle::max_abs_diff(oracle::values(res.fused), ref) <= 1e-12);
      CHECK(oracle::max_abs_diff(oracle::values(res.weights), wref) <= 1e-12);
      for (Index p = 0; p < h * w; ++p) {
        double sum = 0;
        for (Index k = 0; k < t; ++k) sum += res.weights.data()[static_cast<std::size_t>(k * h * w + p)];
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        for (Index ch = 0; ch < c; ++ch) {
          const auto at = static_cast<std::size_t>(ch * h * w + p);
          double lo = fv[0][at], hi = fv[0][at];
          for (const auto& f : fv) lo = std::min(lo, f[at]), hi = std::max(hi, f[at]);
          CHECK(res.fused.data()[at] >= lo - 1e-12);
          CHECK(res.fused.data()[at] <= hi + 1e-12);
        }
      }
    }
  }
  SUBCASE("split size must match the number of inputs") {
    const std::vector<D> fs{D::zeros({1, c, h, w}), D::zeros({1, c, h, w})};
    CHECK_THROWS_AS(fuse<double>(fs, D::zeros({s, 2 * c, 1, 1}), D::zeros({s}), D::zeros({3, s, 1, 1}), D::zeros({3})),
                    ConfigError);
    CHECK_THROWS_AS(fuse<double>(fs, D::zeros({s, c, 1, 1}), D::zeros({s}), D::zeros({2, s, 1, 1}), D::zeros({2})),
                    ConfigError);
    CHECK_THROWS_AS(fuse<double>({}, {}, {}, {}, {}), ConfigError);
  }
}

TEST_CASE("seg_forward shapes") {
  std::mt19937_64 rng(4);
  const D patch = oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  for (const auto& contexts : {lambdas({}), lambdas({1}), lambdas({1, 2, 3}),
                               std::vector<ContextScale>{ContextScale::scaled(2), ContextScale::whole_image()}}) {
    const SegModel<double> m(small_seg(contexts), 5);
    std::vector<D> ctx;
    for (std::size_t i = 0; i < contexts.size(); ++i) ctx.push_back(oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1));
    const auto out = m.forward(patch, ctx);
    CHECK(out.logits.shape() == Shape{1, 3, 16, 16});
    if (contexts.empty()) {
      CHECK_FALSE(out.fusion_weights.defined());
      CHECK_FALSE(m.params().contains("fusion.squeeze.weight"));
    } else {
      CHECK(out.fusion_weights.shape() == Shape{1, static_cast<Index>(contexts.size()), 4, 4});
    }
    ctx.push_back(patch);
    CHECK_THROWS_AS(m.forward(patch, ctx), ConfigError);
  }
}

TEST_CASE("seg_forward with zero weights outputs the head bias") {
  SegModel<double> m(small_seg(lambdas({1, 2})), 6);
  zero_all(m.params());
  auto bias = m.params()["decoder.head.bias"].mutable_data();
  bias[0] = 0.5, bias[1] = -1.0, bias[2] = 2.0;
  std::mt19937_64 rng(6);
  const D patch = oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  const auto out = m.forward(patch, {patch, oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1)});
  for (Index k = 0; k < 3; ++k)
    for (Index y = 0; y < 16; ++y)
      for (Index x = 0; x < 16; ++x) CHECK(out.logits.at({0, k, y, x}) == bias[static_cast<std::size_t>(k)]);
}

TEST_CASE("seg_forward composes encode, lcc, fuse and decode") {
  const SegModel<double> m(small_seg(lambdas({1, 2})), 7);
  std::mt19937_64 rng(7);
  const D patch = oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  const D wide = oracle::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  const D local = m.encode(patch);
  // The unit-scale context is the patch: its branch sees the local features.
  const auto fused = m.fuse({lcc(local, local), lcc(local, m.encode(wide))});
  const D expect = m.decode(add(fused.fused, local));
  CHECK(oracle::max_abs_diff(oracle::values(m.forward(patch, {patch, wide}).logits), oracle::values(expect)) <= 1e-12);
}

TEST_CASE("average fusion has no fusion parameters") {
  auto cfg = small_seg(lambdas({1, 2}));
  cfg.fusion = FusionMode::Average;
  const SegModel<double> m(cfg, 1);
  CHECK_FALSE(m.params().contains("fusion.split.weight"));
  std::mt19937_64 rng(8);
  const D p = oracle::random_tensor({1, 3, 16, 16}, rng);
  const auto out = m.forward(p, {p, p});
  for (double v : out.fusion_weights.data()) CHECK(v == 0.5);
}

TEST_CASE("refine_forward") {
  RefineConfig cfg;
  cfg.num_classes = 3;
  cfg.patch = 16;
  cfg.channels = {4, 6};
  std::mt19937_64 rng(9);
  const D lp = reshape(softmax(oracle::random_tensor({1, 3, 16, 16}, rng, -2, 2), 1), {1, 3, 16, 16});
  const D cp = reshape(softmax(oracle::random_tensor({1, 3, 16, 16}, rng, -2, 2), 1), {1, 3, 16, 16});
  RefineNet<double> net(cfg, 11);
  CHECK(net.forward(lp, cp).shape() == Shape{1, 3, 16, 16});
  CHECK_THROWS_AS(net.forward(lp, D::zeros({1, 3, 8, 8})), DimensionError);

  // With the decoder weights zeroed only the biases reach the head.
  for (const char* name : {"refine.decoder.conv1.weight", "refine.decoder.conv2.weight"})
    for (double& v : net.params()[name].mutable_data()) v = 0.0;
  const D out = net.forward(lp, cp);
  for (Index k = 0; k < 3; ++k)
    for (Index i = 0; i < 256; ++i)
      CHECK(out.data()[static_cast<std::size_t>(k * 256 + i)] == out.data()[static_cast<std::size_t>(k * 256)]);
}

TEST_CASE("parameter sets") {
  const SegModel<double> a(small_seg(lambdas({1, 2})), 42), b(small_seg(lambdas({1, 2})), 42),
      c(small_seg(lambdas({1, 2})), 43);
  REQUIRE(a.params().size() == b.params().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params().entries()[i].name == b.params().entries()[i].name);
    CHECK(oracle::values(a.params().entries()[i].tensor) == oracle::values(b.params().entries()[i].tensor));
    differs = differs || oracle::values(a.params().entries()[i].tensor) != oracle::values(c.params().entries()[i].tensor);
  }
  CHECK(differs);
  for (const char* name : {"encoder.conv1.weight", "fusion.squeeze.weight", "fusion.split.bias", "decoder.head.weight"})
    CHECK(a.params().contains(name));

  ParameterSet<double> ps;
  ps.add("x", {2}, ParameterSet<double>::Init::Zeros, 0);
  CHECK_THROWS_AS(ps.add("x", {2}, ParameterSet<double>::Init::Zeros, 0), ConfigError);
  CHECK_THROWS_AS(ps["y"], ConfigError);

  // Rebuilding from a parameter set checks names and shapes.
  CHECK_NOTHROW(SegModel<double>(small_seg(lambdas({1, 2})), a.params().clone()));
  CHECK_THROWS_AS(SegModel<double>(small_seg(lambdas({1, 2, 3})), a.params().clone()), ConfigError);
  const auto f = a.params().cast<float>();
  CHECK(f.scalar_count() == a.params().scalar_count());
}
