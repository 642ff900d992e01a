#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fctl/dataset.hpp"
#include "fctl/model.hpp"

namespace fctl {

struct TrainConfig {
  double lr0 = 5e-5;
  double poly_power = 0.9;
  Index accum_steps = 6;
  Index epochs = 50;
  std::uint64_t seed = 0;
  double focal_gamma = 3.0;
  /// Epoch after which the early snapshot is taken; negative picks 40% of epochs.
  Index refine_source_epochs = -1;
  bool flips = false;
  Index overlap = 16;

  Index source_epochs() const;
  void validate() const;
};

/// lr0 * (1 - iter/total)^power.
double poly_lr(Index iter, Index total_iter, double lr0, double power);

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// Bias-corrected Adam over every parameter; gradients are cleared afterwards.
/// Parameters without a gradient buffer are treated as having zero gradient.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr);

/// One accumulated step: backward of loss(i)/count for i in [0,count), then Adam.
/// Returns the mean of the unscaled sample losses.
template <typename T>
double accumulate_step(ParameterSet<T>& params, AdamState<T>& state, double lr, Index count,
                       const std::function<Tensor<T>(Index)>& sample_loss);

struct LogRow {
  Index epoch = 0;
  Index iter = 0;
  double lr = 0;
  double loss = 0;
  double train_miou = 0;
};

/// `epoch,iter,lr,loss,train_miou` with 9 significant digits.
std::string log_csv(const std::vector<LogRow>& rows);

using EpochCallback = std::function<void(const LogRow&)>;

/// One training patch with its context inputs, all [1,C,patch,patch].
template <typename T>
struct PatchExample {
  Tensor<T> patch;
  std::vector<Tensor<T>> contexts;
  std::vector<std::uint8_t> labels;
};

template <typename T>
std::vector<PatchExample<T>> make_patch_examples(const Dataset& data, const SegModelConfig& model, Index overlap);

template <typename T>
struct SegTrainResult {
  SegModel<T> model;
  ParameterSet<T> early;  // snapshot after source_epochs()
  std::vector<LogRow> log;
};

template <typename T>
SegTrainResult<T> train_segmentation(const Dataset& data, const TrainConfig& config, const SegModelConfig& model,
                                     const EpochCallback& on_epoch = {});

template <typename T>
struct RefineSample {
  Tensor<T> local_prob;    // [1,C,patch,patch]
  Tensor<T> context_prob;  // [1,C,patch,patch]
  std::vector<std::uint8_t> labels;
};

/// Tiled inference with the (early) segmentation model; contexts are crops of
/// the averaged crude map at `refine_scale`.
template <typename T>
std::vector<RefineSample<T>> generate_refinement_data(const SegModel<T>& early, const Dataset& data, Index overlap,
                                                      ContextScale refine_scale);

template <typename T>
struct RefineTrainResult {
  RefineNet<T> model;
  std::vector<LogRow> log;
};

template <typename T>
RefineTrainResult<T> train_refinement(const std::vector<RefineSample<T>>& samples, const TrainConfig& config,
                                      const RefineConfig& model, const EpochCallback& on_epoch = {});

}  // namespace fctl
