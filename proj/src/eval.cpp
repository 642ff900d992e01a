#include "fctl/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "fctl/error.hpp"
#include "fctl/ops.hpp"

namespace fctl {

namespace {

template <typename T>
Tensor<T> batched(const Tensor<T>& chw) {
  Shape s = chw.shape();
  s.insert(s.begin(), 1);
  return Tensor<T>(std::move(s), std::vector<T>(chw.data().begin(), chw.data().end()));
}

template <typename T>
Tensor<T> unbatched(const Tensor<T>& nchw) {
  Shape s(nchw.shape().begin() + 1, nchw.shape().end());
  return Tensor<T>(std::move(s), std::vector<T>(nchw.data().begin(), nchw.data().end()));
}

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes != classes) {
    throw DimensionError("confusion matrices have " + std::to_string(classes) + " and " +
                         std::to_string(other.classes) + " classes");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

void accumulate_confusion(ConfusionMatrix& cm, std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> gt, std::uint8_t ignore_id) {
  if (pred.size() != gt.size()) throw DimensionError("confusion: prediction and ground truth sizes differ");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore_id) continue;
    if (gt[i] >= cm.classes || pred[i] >= cm.classes) {
      throw ArgumentError("confusion: label " + std::to_string(std::max(gt[i], pred[i])) + " out of range");
    }
    ++cm.at(gt[i], pred[i]);
  }
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, Index num_classes, std::uint8_t ignore_id) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DimensionError("confusion: prediction is " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + ", ground truth " + std::to_string(gt.height) + "x" +
                         std::to_string(gt.width));
  }
  ConfusionMatrix cm(num_classes);
  accumulate_confusion(cm, pred.labels, gt.labels, ignore_id);
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ArgumentError("metrics: no valid pixels");
  const Index C = cm.classes;
  MetricsReport r;
  r.iou.assign(static_cast<std::size_t>(C), std::numeric_limits<double>::quiet_NaN());
  r.f1 = r.iou;
  r.present.assign(static_cast<std::size_t>(C), false);
  std::uint64_t trace = 0;
  Index present = 0;
  for (Index c = 0; c < C; ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (Index o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    trace += tp;
    if (tp + fp + fn == 0) continue;
    const auto i = static_cast<std::size_t>(c);
    r.present[i] = true;
    r.iou[i] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    r.f1[i] = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    r.miou += r.iou[i];
    r.f1_macro += r.f1[i];
    ++present;
  }
  r.miou /= static_cast<double>(present);
  r.f1_macro /= static_cast<double>(present);
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return r;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "class,iou,f1\n";
  char buf[96];
  for (std::size_t c = 0; c < report.iou.size(); ++c) {
    if (report.present[c]) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", c, report.iou[c], report.f1[c]);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,nan,nan\n", c);
    }
    out += buf;
  }
  out += "miou,f1_macro,accuracy\n";
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", report.miou, report.f1_macro, report.accuracy);
  out += buf;
  return out;
}

std::string to_string(MergeMode m) {
  switch (m) {
    case MergeMode::Montage: return "montage";
    case MergeMode::Average: return "average";
    case MergeMode::Refine: return "refine";
  }
  return "?";
}

MergeMode parse_merge_mode(const std::string& s) {
  if (s == "montage") return MergeMode::Montage;
  if (s == "average") return MergeMode::Average;
  if (s == "refine") return MergeMode::Refine;
  throw ConfigError("unknown merge mode '" + s + "' (montage, average, refine)");
}

template <typename T>
std::vector<Tensor<T>> patch_contexts(const Tensor<T>& raster, const PatchGrid& grid, Index index,
                                      const std::vector<ContextScale>& scales) {
  std::vector<Tensor<T>> out;
  out.reserve(scales.size());
  for (const auto& s : scales) out.push_back(batched(extract_context(raster, context_window(grid, index, s), grid.patch)));
  return out;
}

template <typename T>
PatchPredictor<T> seg_predictor(const SegModel<T>& model) {
  return [&model](const Tensor<T>& raster, const PatchGrid& grid, Index index) {
    const Tensor<T> patch = batched(crop(raster, grid.y(index), grid.x(index), grid.patch, grid.patch));
    const auto contexts = patch_contexts(raster, grid, index, model.config().contexts);
    return unbatched(softmax(model.forward(patch, contexts).logits, 1));
  };
}

template <typename T>
std::vector<PatchResult<T>> predict_patches(const PatchPredictor<T>& predictor, const Tensor<T>& raster,
                                            const PatchGrid& grid) {
  const Index n = grid.count();
  std::vector<PatchResult<T>> results(static_cast<std::size_t>(n));
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    try {
      NoGradGuard no_grad;
      results[static_cast<std::size_t>(i)] = {i, predictor(raster, grid, i)};
    } catch (...) {
#pragma omp critical(fctl_predict_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

template <typename T>
std::vector<PatchResult<T>> refine_patches(const RefineNet<T>& refine, const std::vector<PatchResult<T>>& local,
                                           const Tensor<T>& crude, const PatchGrid& grid) {
  const auto n = static_cast<Index>(local.size());
  std::vector<PatchResult<T>> out(local.size());
  const ContextScale scale = refine.config().context_scale;
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    try {
      NoGradGuard no_grad;
      const auto& [index, prob] = local[static_cast<std::size_t>(i)];
      const Tensor<T> ctx = batched(extract_context(crude, context_window(grid, index, scale), grid.patch));
      out[static_cast<std::size_t>(i)] = {index, unbatched(softmax(refine.forward(batched(prob), ctx), 1))};
    } catch (...) {
#pragma omp critical(fctl_refine_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

template <typename T>
Tensor<T> run_pipeline(const Tensor<T>& raster, const PatchPredictor<T>& predictor, const PipelineOptions& options,
                       const RefineNet<T>* refine) {
  if (options.merge == MergeMode::Refine && refine == nullptr) {
    throw ConfigError("merge mode 'refine' needs a refinement checkpoint");
  }
  const PatchGrid grid = plan_grid(raster.dim(1), raster.dim(2), options.patch, options.overlap);
  const auto local = predict_patches(predictor, raster, grid);
  for (const auto& [index, prob] : local) {
    if (prob.shape() != Shape{options.num_classes, options.patch, options.patch}) {
      throw DimensionError("predictor returned " + to_string(prob.shape()) + " for patch " + std::to_string(index));
    }
  }
  switch (options.merge) {
    case MergeMode::Montage: return montage<T>(local, grid);
    case MergeMode::Average: return merge_average<T>(local, grid);
    case MergeMode::Refine: {
      const Tensor<T> crude = merge_average<T>(local, grid);
      return merge_average<T>(refine_patches(*refine, local, crude, grid), grid);
    }
  }
  throw ConfigError("unknown merge mode");
}

template <typename T>
PipelineResult<T> evaluate_pipeline(const RgbImage& image, const LabelMap& gt, const PatchPredictor<T>& predictor,
                                    const PipelineOptions& options, const RefineNet<T>* refine) {
  PipelineResult<T> r;
  r.prob = run_pipeline(image_to_tensor<T>(image), predictor, options, refine);
  r.labels = argmax_labels(r.prob);
  r.cm = confusion(r.labels, gt, options.num_classes);
  r.report = metrics(r.cm);
  return r;
}

template <typename T>
MetricsReport evaluate_dataset(const Dataset& data, const PatchPredictor<T>& predictor,
                               const PipelineOptions& options, const RefineNet<T>* refine) {
  ConfusionMatrix cm(options.num_classes);
  for (const auto& s : data) {
    const Tensor<T> prob = run_pipeline(image_to_tensor<T>(s.image), predictor, options, refine);
    cm += confusion(argmax_labels(prob), s.labels, options.num_classes);
  }
  return metrics(cm);
}

#define FCTL_INSTANTIATE(T)                                                                                     \
  template std::vector<Tensor<T>> patch_contexts(const Tensor<T>&, const PatchGrid&, Index,                    \
                                                 const std::vector<ContextScale>&);                            \
  template PatchPredictor<T> seg_predictor(const SegModel<T>&);                                                 \
  template std::vector<PatchResult<T>> predict_patches(const PatchPredictor<T>&, const Tensor<T>&,              \
                                                       const PatchGrid&);                                       \
  template std::vector<PatchResult<T>> refine_patches(const RefineNet<T>&, const std::vector<PatchResult<T>>&,  \
                                                      const Tensor<T>&, const PatchGrid&);                      \
  template Tensor<T> run_pipeline(const Tensor<T>&, const PatchPredictor<T>&, const PipelineOptions&,           \
                                  const RefineNet<T>*);                                                         \
  template PipelineResult<T> evaluate_pipeline(const RgbImage&, const LabelMap&, const PatchPredictor<T>&,      \
                                               const PipelineOptions&, const RefineNet<T>*);                    \
  template MetricsReport evaluate_dataset(const Dataset&, const PatchPredictor<T>&, const PipelineOptions&,     \
                                          const RefineNet<T>*);

FCTL_INSTANTIATE(float)
FCTL_INSTANTIATE(double)
#undef FCTL_INSTANTIATE

}  // namespace fctl
