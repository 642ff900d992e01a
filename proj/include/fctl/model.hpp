#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fctl/tensor.hpp"
#include "fctl/tiling.hpp"

namespace fctl {

/// Which features the relevance-weighted sum aggregates. `Local` multiplies
/// softmax(R) with the local-patch features; `Context` uses the context
/// features as in a standard non-local block.
enum class Aggregate { Local, Context };

/// `Average` freezes the fusion weights at 1/T (no squeeze/split parameters).
enum class FusionMode { Adaptive, Average };

std::string to_string(Aggregate a);
std::string to_string(FusionMode m);
Aggregate parse_aggregate(const std::string& s);
FusionMode parse_fusion(const std::string& s);

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

/// Named, ordered parameter collection. Initialization is a function of
/// (name, seed) only, so adding a parameter never perturbs the others.
template <typename T>
class ParameterSet {
 public:
  enum class Init { HeNormal, Zeros };

  Tensor<T>& add(const std::string& name, Shape shape, Init init, std::uint64_t seed);
  void add_existing(const std::string& name, Tensor<T> tensor);

  const Tensor<T>& operator[](const std::string& name) const;
  Tensor<T>& operator[](const std::string& name);
  bool contains(const std::string& name) const;

  std::span<const Parameter<T>> entries() const { return entries_; }
  std::span<Parameter<T>> entries() { return entries_; }
  std::vector<Tensor<T>> tensors() const;
  std::size_t size() const { return entries_.size(); }
  Index scalar_count() const;
  void zero_grad();

  /// Deep copy converted to element type U (gradients dropped).
  template <typename U>
  ParameterSet<U> cast() const;
  ParameterSet clone() const { return cast<T>(); }

 private:
  std::vector<Parameter<T>> entries_;
};

struct SegModelConfig {
  Index num_classes = 5;
  Index in_channels = 3;
  /// Empty means the no-context baseline (encoder -> decoder only).
  std::vector<ContextScale> contexts = {ContextScale::scaled(1), ContextScale::scaled(2),
                                        ContextScale::scaled(3)};
  Index patch = 64;
  std::vector<Index> enc_channels = {16, 32, 32};
  Index feature_stride = 4;
  Index squeeze_channels = 32;
  std::vector<Index> dec_channels = {32, 16};
  double focal_gamma = 3.0;
  Aggregate aggregate = Aggregate::Local;
  FusionMode fusion = FusionMode::Adaptive;

  Index context_count() const { return static_cast<Index>(contexts.size()); }
  Index feature_size() const { return patch / feature_stride; }
  Index feature_channels() const { return enc_channels.back(); }
  void validate() const;
};

template <typename T>
struct FusionResult {
  Tensor<T> fused;    // [1,c,h,w]
  Tensor<T> weights;  // [1,T,h,w], per-pixel simplex over axis 1
};

template <typename T>
struct SegOutput {
  Tensor<T> logits;          // [1,num_classes,patch,patch]
  Tensor<T> fusion_weights;  // undefined for the no-context baseline
};

/// Locality-aware contextual correlation. Both inputs [1,c,h,w]; with
/// A, B the [h*w, c] flattenings of local and context features,
/// out = softmax_rows(A B^T) * (A or B), reshaped to [1,c,h,w].
template <typename T>
Tensor<T> lcc(const Tensor<T>& local, const Tensor<T>& context, Aggregate aggregate = Aggregate::Local);

/// The [h*w, h*w] row-softmaxed relevance map used inside lcc.
template <typename T>
Tensor<T> relevance_map(const Tensor<T>& local, const Tensor<T>& context);

/// Squeeze-and-split fusion of T locality-aware feature maps. In adaptive mode
/// squeeze_w [s, T*c, 1, 1], split_w [T, s, 1, 1] (+ biases) give per-pixel
/// weight logits; a channel softmax turns them into weights.
template <typename T>
FusionResult<T> fuse(const std::vector<Tensor<T>>& features, const Tensor<T>& squeeze_w,
                     const Tensor<T>& squeeze_b, const Tensor<T>& split_w, const Tensor<T>& split_b,
                     FusionMode mode = FusionMode::Adaptive);

/// Patch segmentation network: shared (siamese) encoder, one lcc per context,
/// fusion, residual join with the local features, upsampling decoder.
template <typename T>
class SegModel {
 public:
  SegModel(SegModelConfig config, std::uint64_t seed);
  SegModel(SegModelConfig config, ParameterSet<T> params);

  const SegModelConfig& config() const { return config_; }
  const ParameterSet<T>& params() const { return params_; }
  ParameterSet<T>& params() { return params_; }

  /// x [1,in_channels,patch,patch] -> [1,c,patch/stride,patch/stride]
  Tensor<T> encode(const Tensor<T>& x) const;

  /// patch and every context are [1,in_channels,patch,patch]; contexts are
  /// already rescaled to patch size, one per configured context scale.
  SegOutput<T> forward(const Tensor<T>& patch, const std::vector<Tensor<T>>& contexts) const;

  FusionResult<T> fuse(const std::vector<Tensor<T>>& features) const;
  Tensor<T> decode(const Tensor<T>& features) const;

 private:
  void check_input(const Tensor<T>& x, const char* what) const;

  SegModelConfig config_;
  ParameterSet<T> params_;
};

struct RefineConfig {
  Index num_classes = 5;
  Index patch = 64;
  std::vector<Index> channels = {16, 32};
  Aggregate aggregate = Aggregate::Local;
  ContextScale context_scale = ContextScale::scaled(2);

  void validate() const;
};

/// Two-stream U-Net over probability maps: separate local/context encoders,
/// lcc at the bottleneck (residual), decoder with skips from the local stream.
template <typename T>
class RefineNet {
 public:
  RefineNet(RefineConfig config, std::uint64_t seed);
  RefineNet(RefineConfig config, ParameterSet<T> params);

  const RefineConfig& config() const { return config_; }
  const ParameterSet<T>& params() const { return params_; }
  ParameterSet<T>& params() { return params_; }

  /// local_prob, context_prob [1,C,patch,patch] -> logits [1,C,patch,patch]
  Tensor<T> forward(const Tensor<T>& local_prob, const Tensor<T>& context_prob) const;

 private:
  RefineConfig config_;
  ParameterSet<T> params_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class SegModel<float>;
extern template class SegModel<double>;
extern template class RefineNet<float>;
extern template class RefineNet<double>;

}  // namespace fctl
