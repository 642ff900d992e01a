#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fctl/dataset.hpp"
#include "fctl/model.hpp"
#include "fctl/tiling.hpp"

namespace fctl {

/// cm(g, p) counts pixels with ground truth g predicted as p.
struct ConfusionMatrix {
  Index classes = 0;
  std::vector<std::uint64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(Index c) : classes(c), counts(static_cast<std::size_t>(c * c), 0) {}

  std::uint64_t& at(Index g, Index p) { return counts[static_cast<std::size_t>(g * classes + p)]; }
  std::uint64_t at(Index g, Index p) const { return counts[static_cast<std::size_t>(g * classes + p)]; }
  std::uint64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, Index num_classes,
                          std::uint8_t ignore_id = kIgnoreLabel);

/// Same counts for raw label spans (training-time bookkeeping).
void accumulate_confusion(ConfusionMatrix& cm, std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> gt, std::uint8_t ignore_id = kIgnoreLabel);

struct MetricsReport {
  std::vector<double> iou;   // NaN for classes absent from both gt and pred
  std::vector<double> f1;
  std::vector<bool> present;
  double miou = 0;
  double f1_macro = 0;
  double accuracy = 0;
};

/// Means run over classes present in gt or prediction.
MetricsReport metrics(const ConfusionMatrix& cm);

/// `class,iou,f1` rows then the `miou,f1_macro,accuracy` summary, 6 decimals.
std::string metrics_csv(const MetricsReport& report);

enum class MergeMode { Montage, Average, Refine };
std::string to_string(MergeMode m);
MergeMode parse_merge_mode(const std::string& s);

/// Class probabilities [C,patch,patch] for one grid cell of a [3,H,W] raster.
template <typename T>
using PatchPredictor = std::function<Tensor<T>(const Tensor<T>& raster, const PatchGrid& grid, Index index)>;

template <typename T>
PatchPredictor<T> seg_predictor(const SegModel<T>& model);

/// The model's T context inputs for one patch, each [1,C,patch,patch].
template <typename T>
std::vector<Tensor<T>> patch_contexts(const Tensor<T>& raster, const PatchGrid& grid, Index index,
                                      const std::vector<ContextScale>& scales);

/// Runs the predictor on every grid cell. Patches are distributed over the
/// OpenMP pool; results come back in grid order.
template <typename T>
std::vector<PatchResult<T>> predict_patches(const PatchPredictor<T>& predictor, const Tensor<T>& raster,
                                            const PatchGrid& grid);

/// Refined patch probabilities from per-patch probabilities and the crude map.
template <typename T>
std::vector<PatchResult<T>> refine_patches(const RefineNet<T>& refine, const std::vector<PatchResult<T>>& local,
                                           const Tensor<T>& crude, const PatchGrid& grid);

struct PipelineOptions {
  Index patch = 64;
  Index overlap = 16;
  Index num_classes = 5;
  MergeMode merge = MergeMode::Average;
};

/// Tiled inference and merge into a [C,H,W] probability map. `refine` is
/// required in Refine mode and ignored otherwise.
template <typename T>
Tensor<T> run_pipeline(const Tensor<T>& raster, const PatchPredictor<T>& predictor, const PipelineOptions& options,
                       const RefineNet<T>* refine = nullptr);

template <typename T>
struct PipelineResult {
  Tensor<T> prob;
  LabelMap labels;
  ConfusionMatrix cm;
  MetricsReport report;
};

template <typename T>
PipelineResult<T> evaluate_pipeline(const RgbImage& image, const LabelMap& gt, const PatchPredictor<T>& predictor,
                                    const PipelineOptions& options, const RefineNet<T>* refine = nullptr);

/// Global confusion over a dataset, then metrics.
template <typename T>
MetricsReport evaluate_dataset(const Dataset& data, const PatchPredictor<T>& predictor,
                               const PipelineOptions& options, const RefineNet<T>* refine = nullptr);

}  // namespace fctl
