#include "fctl/verification.hpp"

#include <algorithm>
#include <array>
#include <random>

#include "fctl/grad_check.hpp"
#include "fctl/model.hpp"
#include "fctl/ops.hpp"

namespace fctl {

namespace {

using D = Tensor<double>;

struct Gen {
  std::mt19937_64 rng;
  Index range(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }
  D tensor(Shape shape, bool grad = true, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (double& x : v) x = u(rng);
    return D(std::move(shape), std::move(v), grad);
  }
  std::vector<std::uint8_t> labels(Index n, Index classes, bool with_ignore) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
    for (auto& l : out) l = static_cast<std::uint8_t>(range(0, classes - 1));
    if (with_ignore && n > 1) out[0] = 255;
    return out;
  }
};

// sum(out * R) for a fixed random R, so every output coordinate matters.
std::function<D()> projected(std::function<D()> op, Gen& g) {
  auto probe = [&] {
    NoGradGuard ng;
    return op();
  }();
  const D weights = g.tensor(probe.shape(), false);
  return [op = std::move(op), weights] { return sum(mul(op(), weights)); };
}

struct Case {
  std::string name;
  std::function<D()> f;
  std::vector<D> params;
};

std::vector<Case> op_cases(Gen& g) {
  std::vector<Case> cases;
  {
    const Index stride = g.range(1, 2), k = g.range(0, 1) ? 3 : 1, pad = k == 3 ? g.range(0, 1) : 0;
    const Index oh = g.range(1, 4), ow = g.range(1, 4);
    const Index n = g.range(1, 2), cin = g.range(1, 3), cout = g.range(1, 3);
    D x = g.tensor({n, cin, (oh - 1) * stride + k - 2 * pad, (ow - 1) * stride + k - 2 * pad});
    D w = g.tensor({cout, cin, k, k}), b = g.tensor({cout});
    cases.push_back({"conv2d", projected([=] { return conv2d(x, w, b, stride, pad); }, g), {x, w, b}});
  }
  {
    D x = g.tensor({g.range(1, 2), g.range(1, 3), 2 * g.range(1, 3), 2 * g.range(1, 3)});
    cases.push_back({"max_pool2d", projected([=] { return max_pool2d(x, 2, 2); }, g), {x}});
  }
  {
    const Index f = g.range(1, 3);
    D x = g.tensor({1, g.range(1, 2), g.range(1, 4), g.range(1, 4)});
    cases.push_back({"upsample_bilinear", projected([=] { return upsample_bilinear(x, f); }, g), {x}});
  }
  {
    const Index oh = g.range(1, 6), ow = g.range(1, 6);
    D x = g.tensor({1, g.range(1, 2), g.range(1, 6), g.range(1, 6)});
    cases.push_back({"resize_bilinear", projected([=] { return resize_bilinear(x, oh, ow); }, g), {x}});
  }
  {
    D x = g.tensor({g.range(1, 3), g.range(1, 4), g.range(1, 4)}, true, -3.0, 3.0);
    const int axis = static_cast<int>(g.range(0, 2));
    cases.push_back({"softmax", projected([=] { return softmax(x, axis); }, g), {x}});
  }
  {
    const Index m = g.range(1, 5), k = g.range(1, 5), p = g.range(1, 5);
    D a = g.tensor({m, k}), b = g.tensor({k, p});
    cases.push_back({"matmul", projected([=] { return matmul(a, b); }, g), {a, b}});
    D t = g.tensor({m, k});
    cases.push_back({"transpose", projected([=] { return transpose(t); }, g), {t}});
  }
  {
    const int axis = static_cast<int>(g.range(0, 2));
    Shape s{g.range(1, 3), g.range(1, 3), g.range(1, 3)};
    std::vector<D> xs;
    for (int i = 0, n = static_cast<int>(g.range(1, 3)); i < n; ++i) {
      Shape si = s;
      si[static_cast<std::size_t>(axis)] = g.range(1, 3);
      xs.push_back(g.tensor(si));
    }
    cases.push_back({"concat", projected([=] { return concat(xs, axis); }, g), xs});
  }
  {
    D x = g.tensor({g.range(1, 3), g.range(2, 5)});
    const Index b = g.range(0, x.dim(1) - 1), e = g.range(b + 1, x.dim(1));
    cases.push_back({"slice", projected([=] { return slice(x, 1, b, e); }, g), {x}});
    D r = g.tensor({g.range(1, 3), g.range(1, 3), g.range(1, 3)});
    cases.push_back({"reshape", projected([=] { return reshape(r, {r.dim(0) * r.dim(1), r.dim(2)}); }, g), {r}});
  }
  {
    Shape s{g.range(1, 2), g.range(1, 3), g.range(1, 3), g.range(1, 3)};
    D a = g.tensor(s), b = g.tensor(s), bias = g.tensor({s[1]});
    cases.push_back({"add", projected([=] { return add(a, b); }, g), {a, b}});
    cases.push_back({"add_bias", projected([=] { return add(a, bias); }, g), {a, bias}});
    cases.push_back({"mul", projected([=] { return mul(a, b); }, g), {a, b}});
    cases.push_back({"relu", projected([=] { return relu(a); }, g), {a}});
    const double factor = g.tensor({1}, false).item();
    cases.push_back({"scale", projected([=] { return scale(a, factor); }, g), {a}});
    cases.push_back({"mean", [=] { return mean(a); }, {a}});
    D one = g.tensor({s[0], 1, s[2], s[3]});
    const Index c = g.range(1, 4);
    cases.push_back({"expand_channels", projected([=] { return expand_channels(one, c); }, g), {one}});
  }
  {
    const Index c = g.range(2, 4), h = g.range(1, 4), w = g.range(1, 4);
    D logits = g.tensor({1, c, h, w}, true, -2.0, 2.0);
    const auto labels = g.labels(h * w, c, true);
    const double gamma = std::array<double, 3>{0.0, 1.0, 3.0}[static_cast<std::size_t>(g.range(0, 2))];
    if (h * w > 1) {
      cases.push_back({"focal_loss", [=] { return focal_loss(logits, labels, gamma); }, {logits}});
    }
  }
  {
    const Index c = g.range(1, 3), h = g.range(1, 3), w = g.range(1, 3);
    D xi = g.tensor({1, c, h, w}), xu = g.tensor({1, c, h, w});
    cases.push_back({"lcc_local", projected([=] { return lcc(xi, xu, Aggregate::Local); }, g), {xi, xu}});
    cases.push_back({"lcc_context", projected([=] { return lcc(xi, xu, Aggregate::Context); }, g), {xi, xu}});
    cases.push_back({"relevance_map", projected([=] { return relevance_map(xi, xu); }, g), {xi, xu}});
  }
  {
    const Index t = g.range(1, 3), c = g.range(1, 3), s = g.range(1, 4), h = g.range(1, 3);
    std::vector<D> feats;
    for (Index i = 0; i < t; ++i) feats.push_back(g.tensor({1, c, h, h}));
    D sw = g.tensor({s, t * c, 1, 1}), sb = g.tensor({s}), pw = g.tensor({t, s, 1, 1}), pb = g.tensor({t});
    std::vector<D> params = feats;
    params.insert(params.end(), {sw, sb, pw, pb});
    cases.push_back({"fuse", projected([=] { return fuse(feats, sw, sb, pw, pb).fused; }, g), params});
    cases.push_back({"fuse_average", projected([=] { return fuse(feats, {}, {}, {}, {}, FusionMode::Average).fused; }, g),
                     feats});
  }
  return cases;
}

}  // namespace

std::vector<GradSuiteEntry> gradient_suite(std::uint64_t seed, Index instances,
                                           const std::function<void(const GradSuiteEntry&)>& on_entry) {
  constexpr double kEps = 1e-5, kOpTol = 1e-4, kModelTol = 1e-3;
  std::vector<GradSuiteEntry> out;
  auto record = [&](const std::string& name, const GradCheckResult& r, double tol) {
    out.push_back({name, r.max_relative_error, tol, r.coordinates_checked});
    if (on_entry) on_entry(out.back());
  };

  // Worst case per op over all instances.
  std::vector<std::pair<std::string, GradCheckResult>> worst;
  for (Index inst = 0; inst < instances; ++inst) {
    Gen g{std::mt19937_64(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(inst))};
    for (auto& c : op_cases(g)) {
      const auto r = grad_check(c.f, c.params, kEps);
      auto it = std::find_if(worst.begin(), worst.end(), [&](const auto& w) { return w.first == c.name; });
      if (it == worst.end()) {
        worst.emplace_back(c.name, r);
      } else {
        it->second.coordinates_checked += r.coordinates_checked;
        it->second.max_relative_error = std::max(it->second.max_relative_error, r.max_relative_error);
      }
    }
  }
  for (const auto& [name, r] : worst) record(name, r, kOpTol);

  Gen g{std::mt19937_64(seed ^ 0xA5A5A5A5ULL)};
  {
    SegModelConfig cfg;
    cfg.num_classes = 3;
    cfg.patch = 16;
    cfg.enc_channels = {4, 6, 8};
    cfg.squeeze_channels = 8;
    cfg.dec_channels = {8, 4};
    SegModel<double> model(cfg, seed);
    const D patch = g.tensor({1, 3, 16, 16}, false, 0.0, 1.0);
    const std::vector<D> contexts = {patch, g.tensor({1, 3, 16, 16}, false, 0.0, 1.0),
                                     g.tensor({1, 3, 16, 16}, false, 0.0, 1.0)};
    const auto labels = g.labels(16 * 16, 3, true);
    auto f = [&] { return focal_loss(model.forward(patch, contexts).logits, labels, cfg.focal_gamma); };
    record("seg_forward+focal_loss", grad_check(f, model.params().tensors(), kEps, 64, seed), kModelTol);
  }
  {
    RefineConfig cfg;
    cfg.num_classes = 3;
    cfg.patch = 16;
    cfg.channels = {4, 6};
    RefineNet<double> net(cfg, seed);
    const D local = softmax(g.tensor({1, 3, 16, 16}, false, -2.0, 2.0), 1);
    const D context = softmax(g.tensor({1, 3, 16, 16}, false, -2.0, 2.0), 1);
    const auto labels = g.labels(16 * 16, 3, true);
    auto f = [&] { return focal_loss(net.forward(local, context), labels, 3.0); };
    record("refine_forward+focal_loss", grad_check(f, net.params().tensors(), kEps, 64, seed), kModelTol);
  }
  return out;
}

}  // namespace fctl
