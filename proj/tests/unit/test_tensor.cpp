#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "fctl/error.hpp"
#include "fctl/grad_check.hpp"
#include "fctl/ops.hpp"
#include "fctl/tensor_io.hpp"
#include "fctl/verification.hpp"

using namespace fctl;
using D = Tensor<double>;
using F = Tensor<float>;

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(D({2, 3}, std::vector<double>(5)), DimensionError);
  D t = D::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("conv2d examples") {
  SUBCASE("1x1 identity kernel") {
    std::mt19937_64 rng(1);
    D x = oracle::random_tensor({1, 1, 4, 5}, rng);
    D y = conv2d(x, D::full({1, 1, 1, 1}, 1.0), D::zeros({1}));
    CHECK(oracle::values(y) == oracle::values(x));
  }
  SUBCASE("all-ones 3x3 with pad 1") {
    D y = conv2d(D::full({1, 1, 3, 3}, 1.0), D::full({1, 1, 3, 3}, 1.0), D::zeros({1}), 1, 1);
    CHECK(oracle::values(y) == oracle::Vec{4, 6, 4, 6, 9, 6, 4, 6, 4});
  }
  SUBCASE("stride 2 shape") {
    D y = conv2d(D::zeros({1, 1, 8, 8}), D::zeros({1, 1, 3, 3}), D{}, 2, 1);
    CHECK(y.shape() == Shape{1, 1, 4, 4});
  }
  SUBCASE("mismatch names the axes") {
    try {
      conv2d(D::zeros({1, 2, 4, 4}), D::zeros({1, 3, 3, 3}), D{});
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      CHECK(std::string(e.what()).find("axis 1") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(D::zeros({1, 1, 2, 2}), D::zeros({1, 1, 3, 3}), D{}, 1, 0), DimensionError);
  }
}

TEST_CASE("conv2d matches the loop oracle in float") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + trial % 2, cin = 1 + trial % 8, cout = 1 + (trial * 3) % 5;
    const Index h = 16, w = 16, k = (trial % 3 == 0) ? 1 : 3, pad = k / 2, stride = 1 + trial % 2;
    F x = oracle::random_tensor<float>({n, cin, h, w}, rng);
    F wt = oracle::random_tensor<float>({cout, cin, k, k}, rng);
    F b = oracle::random_tensor<float>({cout}, rng);
    const auto bv = oracle::values(b);
    const auto ref = oracle::conv2d(oracle::values(x), oracle::values(wt), &bv, n, cin, h, w, cout, k, k, stride, pad);
    // Float sums of up to 72 terms: compare against the output scale, not per element.
    double scale = 0;
    for (double v : ref) scale = std::max(scale, std::abs(v));
    CHECK(oracle::max_abs_diff(oracle::values(conv2d(x, wt, b, stride, pad)), ref) <= 1e-5 * scale);
  }
}

TEST_CASE("max_pool2d") {
  CHECK(max_pool2d(D::of({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2).item() == 4.0);
  D c = max_pool2d(D::full({1, 2, 4, 4}, 3.5), 2, 2);
  for (double v : c.data()) CHECK(v == 3.5);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    D x = oracle::random_tensor({2, 3, 4, 4}, rng);
    CHECK(oracle::values(max_pool2d(x, 2, 2)) == oracle::max_pool(oracle::values(x), 6, 4, 4, 2));
  }
  CHECK_THROWS_AS(max_pool2d(D::zeros({1, 1, 2, 2}), 3, 3), DimensionError);
}

TEST_CASE("max_pool2d routes ties to the first element") {
  D x({1, 1, 2, 2}, {5, 5, 5, 5}, true);
  backward(sum(max_pool2d(x, 2, 2)));
  CHECK(oracle::Vec(x.grad().begin(), x.grad().end()) == oracle::Vec{1, 0, 0, 0});
}

TEST_CASE("upsample_bilinear") {
  std::mt19937_64 rng(5);
  D x = oracle::random_tensor({1, 2, 3, 3}, rng);
  CHECK(oracle::values(upsample_bilinear(x, 1)) == oracle::values(x));
  const D up = upsample_bilinear(D::full({1, 1, 2, 3}, 0.25), 3);
  for (double v : up.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const D small = D::of({1, 1, 2, 2}, {0, 1, 2, 3});
  const auto ref = oracle::resize(oracle::values(small), 1, 2, 2, 4, 4);
  CHECK(oracle::max_abs_diff(oracle::values(upsample_bilinear(small, 2)), ref) <= 1e-12);
  // Row 0 in closed form: [0, 0.25, 0.75, 1].
  CHECK(ref[1] == doctest::Approx(0.25));
  CHECK(ref[2] == doctest::Approx(0.75));
  CHECK_THROWS_AS(upsample_bilinear(x, 0), ArgumentError);
}

TEST_CASE("softmax") {
  const auto half = softmax(D::of({2}, {0, 0}), 0);
  CHECK(half.at({0}) == 0.5);
  CHECK(half.at({1}) == 0.5);
  const auto s = softmax(D::of({3}, {1, 2, 3}), 0);
  CHECK(s.at({0}) == doctest::Approx(0.09003057).epsilon(1e-6));
  CHECK(s.at({1}) == doctest::Approx(0.24472847).epsilon(1e-6));
  CHECK(s.at({2}) == doctest::Approx(0.66524096).epsilon(1e-6));
  std::mt19937_64 rng(11);
  D x = oracle::random_tensor({3, 5, 4}, rng, -20, 20);
  D shifted({3, 5, 4}, std::vector<double>(x.data().begin(), x.data().end()));
  for (double& v : shifted.mutable_data()) v += 123.25;
  CHECK(oracle::max_abs_diff(oracle::values(softmax(x, 1)), oracle::values(softmax(shifted, 1))) <= 1e-12);
  CHECK_THROWS_AS(softmax(x, 3), ArgumentError);
}

TEST_CASE("softmax slices sum to one") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    F xf = oracle::random_tensor<float>({4, 7}, rng, -50, 50);
    D xd = oracle::random_tensor({4, 7}, rng, -50, 50);
    const auto yf = softmax(xf, 1);
    const auto yd = softmax(xd, 1);
    for (Index r = 0; r < 4; ++r) {
      double sf = 0, sd = 0;
      for (Index c = 0; c < 7; ++c) sf += yf.at({r, c}), sd += yd.at({r, c});
      CHECK(std::abs(sf - 1) <= 1e-6);
      CHECK(std::abs(sd - 1) <= 1e-12);
    }
  }
}

TEST_CASE("matmul") {
  const D a = D::of({2, 2}, {1, 2, 3, 4});
  CHECK(oracle::values(matmul(a, D::of({2, 2}, {1, 0, 0, 1}))) == oracle::values(a));
  CHECK(oracle::values(matmul(a, D::of({2, 2}, {5, 6, 7, 8}))) == oracle::Vec{19, 22, 43, 50});
  CHECK_THROWS_AS(matmul(D::zeros({2, 3}), D::zeros({4, 5})), DimensionError);
}

TEST_CASE("concat, slice and reshape round trips are bit exact") {
  std::mt19937_64 rng(17);
  D a = oracle::random_tensor({1, 2, 4, 4}, rng), b = oracle::random_tensor({1, 3, 4, 4}, rng);
  CHECK(oracle::values(concat<double>({a}, 1)) == oracle::values(a));
  D c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{1, 5, 4, 4});
  CHECK(oracle::values(slice(c, 1, 0, 2)) == oracle::values(a));
  CHECK(oracle::values(slice(c, 1, 2, 5)) == oracle::values(b));
  D r = reshape(reshape(c, {5, 16}), {1, 5, 4, 4});
  CHECK(oracle::values(r) == oracle::values(c));
  CHECK_THROWS_AS(concat<double>({a, D::zeros({1, 2, 4, 5})}, 1), DimensionError);
}

TEST_CASE("elementwise") {
  std::mt19937_64 rng(19);
  D x = oracle::random_tensor({2, 3, 2, 2}, rng);
  CHECK(oracle::values(add(x, D::zeros(x.shape()))) == oracle::values(x));
  CHECK(oracle::values(mul(x, D::full(x.shape(), 1.0))) == oracle::values(x));
  CHECK(oracle::values(relu(D::of({3}, {-1, 0, 2}))) == oracle::Vec{0, 0, 2});
  D biased = add(x, D::of({3}, {1, 2, 3}));
  CHECK(biased.at({1, 2, 1, 0}) == x.at({1, 2, 1, 0}) + 3);
  CHECK_THROWS_AS(add(x, D::zeros({2, 3, 2, 1})), DimensionError);
}

TEST_CASE("relu subgradient at zero is zero") {
  D x({3}, {-1, 0, 2}, true);
  backward(sum(relu(x)));
  CHECK(oracle::Vec(x.grad().begin(), x.grad().end()) == oracle::Vec{0, 0, 1});
}

TEST_CASE("backward") {
  std::mt19937_64 rng(23);
  SUBCASE("sum gives ones") {
    D x = oracle::random_tensor({3, 4}, rng, -1, 1, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("product rule") {
    D x = oracle::random_tensor({3, 4}, rng, -1, 1, true);
    D y = oracle::random_tensor({3, 4}, rng);
    backward(sum(mul(x, y)));
    CHECK(oracle::Vec(x.grad().begin(), x.grad().end()) == oracle::values(y));
  }
  SUBCASE("accumulates across calls") {
    D x = oracle::random_tensor({5}, rng, -1, 1, true);
    D y = oracle::random_tensor({5}, rng);
    backward(sum(mul(x, y)));
    backward(sum(mul(x, y)));
    for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == 2 * y.data()[i]);
  }
  SUBCASE("non-scalar loss") {
    D x = oracle::random_tensor({2}, rng, -1, 1, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ArgumentError);
  }
  SUBCASE("graph is released unless retained") {
    D x = oracle::random_tensor({2}, rng, -1, 1, true);
    D loss = sum(mul(x, x));
    backward(loss, true);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(4 * x.data()[0]));
    CHECK(loss.node()->inputs.empty());
  }
  SUBCASE("no graph under NoGradGuard") {
    D x = oracle::random_tensor({2}, rng, -1, 1, true);
    NoGradGuard ng;
    CHECK_FALSE(sum(x).requires_grad());
  }
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(29);
  D w = oracle::random_tensor({4, 3}, rng, -1, 1, true);
  D x = oracle::random_tensor({3, 2}, rng);
  CHECK(grad_check([&] { return sum(matmul(w, x)); }, {w}).max_relative_error <= 1e-10);
  CHECK(grad_check([&] {
          D wx = matmul(w, x);
          return sum(mul(wx, wx));
        },
                   {w}, 1e-5)
            .max_relative_error <= 1e-6);
  D img = oracle::random_tensor({1, 2, 5, 5}, rng, -1, 1, true);
  D k = oracle::random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
  D b = oracle::random_tensor({3}, rng, -1, 1, true);
  D proj = oracle::random_tensor({1, 3, 5, 5}, rng);
  const auto r = grad_check([&] { return sum(mul(softmax(relu(conv2d(img, k, b, 1, 1)), 1), proj)); }, {img, k, b});
  CHECK(r.max_relative_error <= 1e-4);
  CHECK(r.coordinates_checked == img.size() + k.size() + b.size());
  // Stride 2 where the width span (6 + 2 - 3 = 5) leaves a column unused.
  D wide = oracle::random_tensor({1, 2, 5, 6}, rng, -1, 1, true);
  D proj2 = oracle::random_tensor({1, 3, 3, 3}, rng);
  CHECK(grad_check([&] { return sum(mul(conv2d(wide, k, b, 2, 1), proj2)); }, {wide, k, b}).max_relative_error <= 1e-6);
  CHECK_THROWS_AS(grad_check([&] { return matmul(w, x); }, {w}), ArgumentError);
  CHECK_THROWS_AS(grad_check([&] { return sum(w); }, {w}, 1e-2), ArgumentError);
}

TEST_CASE("every differentiable op passes grad_check on 20 random instances") {
  for (const auto& e : gradient_suite(2024, 20)) {
    INFO(e.name << " " << e.max_relative_error);
    CHECK(e.passed());
  }
}

TEST_CASE("focal loss") {
  SUBCASE("confident prediction has loss near zero") {
    D logits = D::of({1, 2, 1, 2}, {40, -40, -40, 40});
    const std::vector<std::uint8_t> labels{0, 1};
    CHECK(focal_loss(logits, labels, 3.0).item() < 1e-12);
  }
  SUBCASE("gamma 0, equal logits is ln 2") {
    const std::vector<std::uint8_t> labels{1};
    CHECK(focal_loss(D::zeros({1, 2, 1, 1}), labels, 0.0).item() == doctest::Approx(0.693147).epsilon(1e-6));
  }
  SUBCASE("gamma 3 at p_t = 0.5") {
    const std::vector<std::uint8_t> labels{0};
    CHECK(focal_loss(D::zeros({1, 2, 1, 1}), labels, 3.0).item() == doctest::Approx(0.086643).epsilon(1e-5));
  }
  SUBCASE("gamma 0 equals mean cross-entropy") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 20; ++i) {
      D logits = oracle::random_tensor({1, 4, 3, 3}, rng, -3, 3);
      std::vector<std::uint8_t> labels(9);
      for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 4);
      labels[4] = 255;
      double ce = 0;
      const D p = softmax(logits, 1);
      for (Index j = 0; j < 9; ++j) {
        if (labels[static_cast<std::size_t>(j)] == 255) continue;
        ce -= std::log(p.at({0, labels[static_cast<std::size_t>(j)], j / 3, j % 3}));
      }
      const double fl = focal_loss(logits, labels, 0.0).item();
      CHECK(std::abs(fl - ce / 8) <= 1e-6);
      CHECK(focal_loss(logits, labels, 3.0).item() >= 0);
    }
  }
  SUBCASE("all ignored") {
    const std::vector<std::uint8_t> labels{255, 255};
    CHECK_THROWS_WITH_AS(focal_loss(D::zeros({1, 2, 1, 2}), labels, 3.0), doctest::Contains("no valid pixels"),
                         ArgumentError);
  }
}

TEST_CASE("ops are deterministic") {
  std::mt19937_64 rng(37);
  F x = oracle::random_tensor<float>({2, 4, 12, 12}, rng);
  F w = oracle::random_tensor<float>({6, 4, 3, 3}, rng);
  F b = oracle::random_tensor<float>({6}, rng);
  auto run = [&] { return oracle::values(softmax(upsample_bilinear(max_pool2d(conv2d(x, w, b, 1, 1), 2, 2), 2), 1)); };
  CHECK(run() == run());
}

TEST_CASE("tensor file round trip") {
  std::mt19937_64 rng(41);
  const F f = oracle::random_tensor<float>({2, 3, 4}, rng);
  const D d = oracle::random_tensor({5}, rng);
  const std::vector<std::uint8_t> bytes{0, 1, 255, 7};
  for (const RawTensor& raw : {to_raw(f), to_raw(d), to_raw(Shape{2, 2}, bytes)}) {
    const std::string enc = encode_tensor(raw);
    CHECK(enc.substr(0, 4) == "TNSR");
    const std::vector<std::uint8_t> buf(enc.begin(), enc.end());
    const RawTensor back = decode_tensor(buf);
    CHECK(back.dtype == raw.dtype);
    CHECK(back.shape == raw.shape);
    CHECK(back.payload == raw.payload);
  }
  CHECK(oracle::values(from_raw<float>(to_raw(f))) == oracle::values(f));
  CHECK_THROWS_AS(from_raw<double>(to_raw(f)), IoError);
  std::string bad = encode_tensor(to_raw(d));
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(std::vector<std::uint8_t>(bad.begin(), bad.end())), IoError);
  std::string cut = encode_tensor(to_raw(d));
  cut.pop_back();
  CHECK_THROWS_AS(decode_tensor(std::vector<std::uint8_t>(cut.begin(), cut.end())), IoError);
}
