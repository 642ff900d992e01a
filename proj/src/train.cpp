#include "fctl/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "fctl/error.hpp"
#include "fctl/eval.hpp"
#include "fctl/ops.hpp"

namespace fctl {

namespace {

template <typename T>
Tensor<T> batched(const Tensor<T>& chw) {
  Shape s = chw.shape();
  s.insert(s.begin(), 1);
  return Tensor<T>(std::move(s), std::vector<T>(chw.data().begin(), chw.data().end()));
}

// Channel argmax of [1,C,H,W] logits, first maximum on ties.
template <typename T>
std::vector<std::uint8_t> argmax_channels(const Tensor<T>& logits) {
  const Index C = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  const auto d = logits.data();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(plane), 0);
  for (Index i = 0; i < plane; ++i) {
    Index best = 0;
    for (Index c = 1; c < C; ++c)
      if (d[static_cast<std::size_t>(c * plane + i)] > d[static_cast<std::size_t>(best * plane + i)]) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

// Mirror a [1,C,H,W] tensor (or an HxW label plane) in place of a copy.
template <typename V>
std::vector<V> flip_planes(std::span<const V> src, Index planes, Index h, Index w, bool flip_y, bool flip_x) {
  std::vector<V> out(src.size());
  for (Index p = 0; p < planes; ++p)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const Index sy = flip_y ? h - 1 - y : y, sx = flip_x ? w - 1 - x : x;
        out[static_cast<std::size_t>((p * h + y) * w + x)] = src[static_cast<std::size_t>((p * h + sy) * w + sx)];
      }
  return out;
}

template <typename T>
Tensor<T> flip_tensor(const Tensor<T>& t, bool fy, bool fx) {
  return Tensor<T>(t.shape(), flip_planes<T>(t.data(), t.dim(0) * t.dim(1), t.dim(2), t.dim(3), fy, fx));
}

std::vector<Index> shuffled(Index n, std::mt19937_64& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  // Fisher-Yates with an explicit modulus so the permutation does not depend
  // on the standard library's distribution implementation.
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

void check_geometry(const Dataset& data, const SegModelConfig& model) {
  for (const auto& s : data) {
    if (s.image.height != s.labels.height || s.image.width != s.labels.width) {
      throw ConfigError("sample " + s.id + ": image and label sizes differ");
    }
    const Index side = std::min(s.image.height, s.image.width);
    if (side < model.patch) {
      throw ConfigError("sample " + s.id + " is smaller than the patch size " + std::to_string(model.patch));
    }
    for (const auto& c : model.contexts) {
      if (!c.global && std::llround(c.lambda * static_cast<double>(model.patch)) > side) {
        throw ConfigError("context scale " + c.to_string() + " does not fit sample " + s.id + "; use g");
      }
    }
  }
}

// Shared epoch loop for both networks. `loss_of(i, cm)` runs the forward pass
// for example perm[i] and records its prediction in cm.
template <typename T>
std::vector<LogRow> run_epochs(ParameterSet<T>& params, Index n, Index classes, const TrainConfig& config,
                               const std::function<Tensor<T>(Index, std::mt19937_64&, ConfusionMatrix&)>& loss_of,
                               const std::function<void(Index)>& after_epoch, const EpochCallback& on_epoch) {
  const Index steps = (n + config.accum_steps - 1) / config.accum_steps;
  const Index total = steps * config.epochs;
  std::mt19937_64 rng(config.seed ^ 0xC0FFEE5EED5ULL);
  AdamState<T> state;
  std::vector<LogRow> log;
  Index iter = 0;
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto perm = shuffled(n, rng);
    ConfusionMatrix cm(classes);
    double loss_sum = 0, lr = 0;
    for (Index s = 0; s < steps; ++s) {
      const Index begin = s * config.accum_steps;
      const Index count = std::min(config.accum_steps, n - begin);
      lr = poly_lr(iter, total, config.lr0, config.poly_power);
      loss_sum += static_cast<double>(count) * accumulate_step<T>(params, state, lr, count, [&](Index i) {
        return loss_of(perm[static_cast<std::size_t>(begin + i)], rng, cm);
      });
      ++iter;
    }
    LogRow row{epoch, iter, lr, loss_sum / static_cast<double>(n), metrics(cm).miou};
    log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (after_epoch) after_epoch(epoch);
  }
  return log;
}

}  // namespace

Index TrainConfig::source_epochs() const {
  if (refine_source_epochs >= 0) return refine_source_epochs;
  return std::max<Index>(1, (epochs * 2) / 5);
}

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("lr0 must be > 0");
  if (accum_steps < 1) throw ConfigError("accum_steps must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (source_epochs() >= epochs && epochs > 1) throw ConfigError("refine_source_epochs must be < epochs");
  if (overlap < 0) throw ConfigError("overlap must be >= 0");
  if (!(focal_gamma >= 0)) throw ConfigError("gamma must be >= 0");
}

double poly_lr(Index iter, Index total_iter, double lr0, double power) {
  if (total_iter <= 0) throw ArgumentError("poly_lr: total_iter must be > 0");
  if (iter < 0 || iter > total_iter) {
    throw ArgumentError("poly_lr: iter " + std::to_string(iter) + " outside [0, " + std::to_string(total_iter) + "]");
  }
  return lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total_iter), power);
}

template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr) {
  auto entries = params.entries();
  if (state.step == 0 && state.m.empty()) {
    for (const auto& p : entries) {
      state.m.emplace_back(static_cast<std::size_t>(p.tensor.size()), T{0});
      state.v.emplace_back(static_cast<std::size_t>(p.tensor.size()), T{0});
    }
  }
  if (state.m.size() != entries.size()) throw StateError("adam: state tracks a different number of parameters");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (state.m[k].size() != static_cast<std::size_t>(entries[k].tensor.size())) {
      throw StateError("adam: moment shape mismatch for " + entries[k].name);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor<T>& t = entries[k].tensor;
    if (!t.has_grad()) {
      // Zero gradient still decays the moments.
      for (std::size_t i = 0; i < state.m[k].size(); ++i) {
        state.m[k][i] *= b1;
        state.v[k][i] *= b2;
      }
    } else {
      const auto g = t.grad();
      for (std::size_t i = 0; i < state.m[k].size(); ++i) {
        state.m[k][i] = b1 * state.m[k][i] + (T{1} - b1) * g[i];
        state.v[k][i] = b2 * state.v[k][i] + (T{1} - b2) * g[i] * g[i];
      }
    }
    auto w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double mhat = static_cast<double>(state.m[k][i]) / bc1;
      const double vhat = static_cast<double>(state.v[k][i]) / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
    t.zero_grad();
  }
}

template <typename T>
double accumulate_step(ParameterSet<T>& params, AdamState<T>& state, double lr, Index count,
                       const std::function<Tensor<T>(Index)>& sample_loss) {
  if (count < 1) throw ArgumentError("accumulate_step: count must be >= 1");
  double total = 0;
  for (Index i = 0; i < count; ++i) {
    const Tensor<T> loss = sample_loss(i);
    total += static_cast<double>(loss.item());
    backward(scale(loss, T{1} / static_cast<T>(count)));
  }
  adam_step(params, state, lr);
  return total / static_cast<double>(count);
}

std::string log_csv(const std::vector<LogRow>& rows) {
  std::string out = "epoch,iter,lr,loss,train_miou\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(r.epoch),
                  static_cast<long long>(r.iter), r.lr, r.loss, r.train_miou);
    out += buf;
  }
  return out;
}

template <typename T>
std::vector<PatchExample<T>> make_patch_examples(const Dataset& data, const SegModelConfig& model, Index overlap) {
  check_geometry(data, model);
  std::vector<PatchExample<T>> out;
  for (const auto& s : data) {
    const Tensor<T> raster = image_to_tensor<T>(s.image);
    const PatchGrid grid = plan_grid(s.image.height, s.image.width, model.patch, overlap);
    for (Index i = 0; i < grid.count(); ++i) {
      PatchExample<T> ex;
      ex.patch = batched(crop(raster, grid.y(i), grid.x(i), grid.patch, grid.patch));
      ex.contexts = patch_contexts(raster, grid, i, model.contexts);
      ex.labels = crop_labels(s.labels, grid.y(i), grid.x(i), grid.patch, grid.patch).labels;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

template <typename T>
SegTrainResult<T> train_segmentation(const Dataset& data, const TrainConfig& config, const SegModelConfig& model_cfg,
                                     const EpochCallback& on_epoch) {
  config.validate();
  model_cfg.validate();
  if (data.empty()) throw ArgumentError("train_segmentation: empty dataset");
  const auto examples = make_patch_examples<T>(data, model_cfg, config.overlap);
  SegTrainResult<T> result{SegModel<T>(model_cfg, config.seed), {}, {}};
  SegModel<T>& model = result.model;
  const Index p = model_cfg.patch;

  auto loss_of = [&](Index idx, std::mt19937_64& rng, ConfusionMatrix& cm) {
    const auto& ex = examples[static_cast<std::size_t>(idx)];
    Tensor<T> patch = ex.patch;
    std::vector<Tensor<T>> contexts = ex.contexts;
    std::vector<std::uint8_t> labels = ex.labels;
    if (config.flips) {
      const std::uint64_t bits = rng();
      const bool fy = bits & 1U, fx = bits & 2U;
      if (fy || fx) {
        patch = flip_tensor(patch, fy, fx);
        for (auto& c : contexts) c = flip_tensor(c, fy, fx);
        labels = flip_planes<std::uint8_t>(labels, 1, p, p, fy, fx);
      }
    }
    const Tensor<T> logits = model.forward(patch, contexts).logits;
    accumulate_confusion(cm, argmax_channels(logits), labels);
    return focal_loss(logits, labels, config.focal_gamma);
  };
  const Index source = config.source_epochs();
  auto after_epoch = [&](Index epoch) {
    if (epoch == source) result.early = model.params().clone();
  };
  result.log = run_epochs<T>(model.params(), static_cast<Index>(examples.size()), model_cfg.num_classes, config,
                             loss_of, after_epoch, on_epoch);
  if (result.early.size() == 0) result.early = model.params().clone();
  return result;
}

template <typename T>
std::vector<RefineSample<T>> generate_refinement_data(const SegModel<T>& early, const Dataset& data, Index overlap,
                                                      ContextScale refine_scale) {
  check_geometry(data, early.config());
  std::vector<RefineSample<T>> out;
  const auto predictor = seg_predictor(early);
  const Index p = early.config().patch;
  for (const auto& s : data) {
    const Tensor<T> raster = image_to_tensor<T>(s.image);
    const PatchGrid grid = plan_grid(s.image.height, s.image.width, p, overlap);
    const auto local = predict_patches(predictor, raster, grid);
    const Tensor<T> crude = merge_average<T>(local, grid);
    for (const auto& [index, prob] : local) {
      RefineSample<T> r;
      r.local_prob = batched(prob);
      r.context_prob = batched(extract_context(crude, context_window(grid, index, refine_scale), p));
      r.labels = crop_labels(s.labels, grid.y(index), grid.x(index), p, p).labels;
      out.push_back(std::move(r));
    }
  }
  return out;
}

template <typename T>
RefineTrainResult<T> train_refinement(const std::vector<RefineSample<T>>& samples, const TrainConfig& config,
                                      const RefineConfig& model_cfg, const EpochCallback& on_epoch) {
  config.validate();
  model_cfg.validate();
  if (samples.empty()) throw ArgumentError("train_refinement: no samples");
  RefineTrainResult<T> result{RefineNet<T>(model_cfg, config.seed), {}};
  RefineNet<T>& net = result.model;
  const Index p = model_cfg.patch;
  for (const auto& s : samples) {
    if (s.local_prob.shape() != Shape{1, model_cfg.num_classes, p, p} || s.context_prob.shape() != s.local_prob.shape()) {
      throw ConfigError("refinement sample shape " + to_string(s.local_prob.shape()) + " does not match the config");
    }
  }
  auto loss_of = [&](Index idx, std::mt19937_64& rng, ConfusionMatrix& cm) {
    const auto& s = samples[static_cast<std::size_t>(idx)];
    Tensor<T> local = s.local_prob, context = s.context_prob;
    std::vector<std::uint8_t> labels = s.labels;
    if (config.flips) {
      const std::uint64_t bits = rng();
      const bool fy = bits & 1U, fx = bits & 2U;
      if (fy || fx) {
        local = flip_tensor(local, fy, fx);
        context = flip_tensor(context, fy, fx);
        labels = flip_planes<std::uint8_t>(labels, 1, p, p, fy, fx);
      }
    }
    const Tensor<T> logits = net.forward(local, context);
    accumulate_confusion(cm, argmax_channels(logits), labels);
    return focal_loss(logits, labels, config.focal_gamma);
  };
  result.log = run_epochs<T>(net.params(), static_cast<Index>(samples.size()), model_cfg.num_classes, config,
                             loss_of, {}, on_epoch);
  return result;
}

#define FCTL_INSTANTIATE(T)                                                                                     \
  template void adam_step(ParameterSet<T>&, AdamState<T>&, double);                                             \
  template double accumulate_step(ParameterSet<T>&, AdamState<T>&, double, Index,                               \
                                  const std::function<Tensor<T>(Index)>&);                                      \
  template std::vector<PatchExample<T>> make_patch_examples(const Dataset&, const SegModelConfig&, Index);      \
  template SegTrainResult<T> train_segmentation(const Dataset&, const TrainConfig&, const SegModelConfig&,      \
                                                const EpochCallback&);                                          \
  template std::vector<RefineSample<T>> generate_refinement_data(const SegModel<T>&, const Dataset&, Index,     \
                                                                 ContextScale);                                 \
  template RefineTrainResult<T> train_refinement(const std::vector<RefineSample<T>>&, const TrainConfig&,       \
                                                 const RefineConfig&, const EpochCallback&);

FCTL_INSTANTIATE(float)
FCTL_INSTANTIATE(double)
#undef FCTL_INSTANTIATE

}  // namespace fctl
