#include "fctl/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fctl/ops.hpp"

namespace fctl {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool is_unit_scale(const ContextScale& s) { return !s.global && s.lambda == 1.0; }

template <typename T>
bool same_values(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

template <typename T>
void add_conv(ParameterSet<T>& ps, const std::string& prefix, Index out, Index in, Index k,
              std::uint64_t seed) {
  using Init = typename ParameterSet<T>::Init;
  ps.add(prefix + ".weight", {out, in, k, k}, Init::HeNormal, seed);
  ps.add(prefix + ".bias", {out}, Init::Zeros, seed);
}

template <typename T>
Tensor<T> conv_relu(const ParameterSet<T>& ps, const std::string& prefix, const Tensor<T>& x) {
  const Tensor<T>& w = ps[prefix + ".weight"];
  return relu(conv2d(x, w, ps[prefix + ".bias"], 1, w.dim(2) / 2));
}

template <typename T>
Tensor<T> conv_plain(const ParameterSet<T>& ps, const std::string& prefix, const Tensor<T>& x) {
  const Tensor<T>& w = ps[prefix + ".weight"];
  return conv2d(x, w, ps[prefix + ".bias"], 1, w.dim(2) / 2);
}

// [1,c,h,w] -> [h*w, c]
template <typename T>
Tensor<T> flatten_pixels(const Tensor<T>& x) {
  return transpose(reshape(x, {x.dim(1), x.dim(2) * x.dim(3)}));
}

}  // namespace

std::string to_string(Aggregate a) { return a == Aggregate::Local ? "local" : "context"; }
std::string to_string(FusionMode m) { return m == FusionMode::Adaptive ? "adaptive" : "average"; }

Aggregate parse_aggregate(const std::string& s) {
  if (s == "local") return Aggregate::Local;
  if (s == "context") return Aggregate::Context;
  throw ConfigError("aggregate must be 'local' or 'context', got '" + s + "'");
}

FusionMode parse_fusion(const std::string& s) {
  if (s == "adaptive") return FusionMode::Adaptive;
  if (s == "average") return FusionMode::Average;
  throw ConfigError("fusion must be 'adaptive' or 'average', got '" + s + "'");
}

// ---------------------------------------------------------------- ParameterSet

template <typename T>
Tensor<T>& ParameterSet<T>::add(const std::string& name, Shape shape, Init init, std::uint64_t seed) {
  const Index n = numel(shape);
  std::vector<T> values(static_cast<std::size_t>(n), T{0});
  if (init == Init::HeNormal) {
    Index fan_in = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    std::mt19937_64 rng(fnv1a(name) ^ (seed * 0x9E3779B97F4A7C15ULL));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (T& v : values) v = static_cast<T>(normal(rng));
  }
  add_existing(name, Tensor<T>(std::move(shape), std::move(values), true));
  return entries_.back().tensor;
}

template <typename T>
void ParameterSet<T>::add_existing(const std::string& name, Tensor<T> tensor) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  entries_.push_back({name, std::move(tensor)});
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
}

template <typename T>
const Tensor<T>& ParameterSet<T>::operator[](const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ConfigError("unknown parameter '" + name + "'");
}

template <typename T>
Tensor<T>& ParameterSet<T>::operator[](const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw ConfigError("unknown parameter '" + name + "'");
}

template <typename T>
std::vector<Tensor<T>> ParameterSet<T>::tensors() const {
  std::vector<Tensor<T>> out;
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

template <typename T>
Index ParameterSet<T>::scalar_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename T>
template <typename U>
ParameterSet<U> ParameterSet<T>::cast() const {
  ParameterSet<U> out;
  for (const auto& e : entries_) {
    std::vector<U> values(e.tensor.data().begin(), e.tensor.data().end());
    out.add_existing(e.name, Tensor<U>(e.tensor.shape(), std::move(values), true));
  }
  return out;
}

// ------------------------------------------------------------------- config

void SegModelConfig::validate() const {
  if (num_classes < 2 || num_classes > 255) throw ConfigError("num_classes must lie in [2, 255]");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (enc_channels.size() < 2) throw ConfigError("encoder needs at least two stages");
  const Index pools = static_cast<Index>(enc_channels.size()) - 1;
  if (feature_stride != (Index{1} << pools)) {
    throw ConfigError("feature_stride must equal 2^(encoder stages - 1) = " +
                      std::to_string(Index{1} << pools));
  }
  if (patch < feature_stride || patch % feature_stride != 0) {
    throw ConfigError("patch must be divisible by feature_stride");
  }
  if (static_cast<Index>(dec_channels.size()) != pools) {
    throw ConfigError("decoder needs one stage per encoder pool");
  }
  if (squeeze_channels < 1) throw ConfigError("squeeze_channels must be >= 1");
  for (std::size_t i = 1; i < contexts.size(); ++i) {
    const auto& a = contexts[i - 1];
    const auto& b = contexts[i];
    if (a.global || (!b.global && b.lambda <= a.lambda)) {
      throw ConfigError("context scales must be strictly increasing (GLOBAL last)");
    }
  }
  for (const auto& c : contexts) {
    if (!c.global && c.lambda < 1.0) throw ConfigError("context lambda must be >= 1");
  }
  if (focal_gamma < 0) throw ConfigError("focal gamma must be >= 0");
}

void RefineConfig::validate() const {
  if (num_classes < 2 || num_classes > 255) throw ConfigError("num_classes must lie in [2, 255]");
  if (channels.size() != 2) throw ConfigError("refinement network has exactly two encoder stages");
  if (patch % 4 != 0) throw ConfigError("refinement patch must be divisible by 4");
}

// ---------------------------------------------------------------- attention

template <typename T>
Tensor<T> relevance_map(const Tensor<T>& local, const Tensor<T>& context) {
  if (local.rank() != 4 || local.shape() != context.shape() || local.dim(0) != 1) {
    throw DimensionError("lcc: local " + to_string(local.shape()) + " and context " +
                         to_string(context.shape()) + " must be equal [1,c,h,w]");
  }
  const Tensor<T> a = flatten_pixels(local);
  const Tensor<T> b = flatten_pixels(context);
  return softmax(matmul(a, transpose(b)), 1);
}

template <typename T>
Tensor<T> lcc(const Tensor<T>& local, const Tensor<T>& context, Aggregate aggregate) {
  if (local.rank() != 4 || local.shape() != context.shape() || local.dim(0) != 1) {
    throw DimensionError("lcc: local " + to_string(local.shape()) + " and context " +
                         to_string(context.shape()) + " must be equal [1,c,h,w]");
  }
  const Tensor<T> a = flatten_pixels(local);
  const Tensor<T> b = flatten_pixels(context);
  const Tensor<T> attention = softmax(matmul(a, transpose(b)), 1);
  const Tensor<T> mixed = matmul(attention, aggregate == Aggregate::Local ? a : b);
  return reshape(transpose(mixed), local.shape());
}

template <typename T>
FusionResult<T> fuse(const std::vector<Tensor<T>>& features, const Tensor<T>& squeeze_w,
                     const Tensor<T>& squeeze_b, const Tensor<T>& split_w, const Tensor<T>& split_b,
                     FusionMode mode) {
  if (features.empty()) throw ConfigError("fuse: no context features");
  const Index t = static_cast<Index>(features.size());
  const Shape& shape = features.front().shape();
  for (const auto& f : features) {
    if (f.shape() != shape) {
      throw DimensionError("fuse: feature shapes differ: " + to_string(f.shape()) + " vs " +
                           to_string(shape));
    }
  }
  if (shape.size() != 4 || shape[0] != 1) throw DimensionError("fuse: features must be [1,c,h,w]");
  const Index c = shape[1], h = shape[2], w = shape[3];

  Tensor<T> weights;
  if (mode == FusionMode::Average) {
    weights = Tensor<T>::full({1, t, h, w}, T{1} / static_cast<T>(t));
  } else {
    if (!split_w.defined() || split_w.dim(0) != t) {
      throw ConfigError("fuse: split layer produces " +
                        (split_w.defined() ? std::to_string(split_w.dim(0)) : std::string("no")) +
                        " weight maps for " + std::to_string(t) + " contexts");
    }
    if (squeeze_w.dim(1) != t * c) {
      throw ConfigError("fuse: squeeze layer expects " + std::to_string(squeeze_w.dim(1)) +
                        " input channels, got " + std::to_string(t * c));
    }
    const Tensor<T> stacked = t == 1 ? features.front() : concat(features, 1);
    const Tensor<T> squeezed = relu(conv2d(stacked, squeeze_w, squeeze_b));
    weights = softmax(conv2d(squeezed, split_w, split_b), 1);
  }

  Tensor<T> fused;
  for (Index i = 0; i < t; ++i) {
    const Tensor<T> wi = expand_channels(slice(weights, 1, i, i + 1), c);
    const Tensor<T> term = mul(wi, features[static_cast<std::size_t>(i)]);
    fused = fused.defined() ? add(fused, term) : term;
  }
  return {fused, weights};
}

// ------------------------------------------------------------------ SegModel

template <typename T>
SegModel<T>::SegModel(SegModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Index prev = config_.in_channels;
  for (std::size_t i = 0; i < config_.enc_channels.size(); ++i) {
    add_conv(params_, "encoder.conv" + std::to_string(i + 1), config_.enc_channels[i], prev, 3, seed);
    prev = config_.enc_channels[i];
  }
  const Index c = config_.feature_channels();
  const Index t = config_.context_count();
  if (t > 0 && config_.fusion == FusionMode::Adaptive) {
    add_conv(params_, "fusion.squeeze", config_.squeeze_channels, t * c, 1, seed);
    add_conv(params_, "fusion.split", t, config_.squeeze_channels, 1, seed);
  }
  prev = c;
  for (std::size_t i = 0; i < config_.dec_channels.size(); ++i) {
    add_conv(params_, "decoder.conv" + std::to_string(i + 1), config_.dec_channels[i], prev, 3, seed);
    prev = config_.dec_channels[i];
  }
  add_conv(params_, "decoder.head", config_.num_classes, prev, 1, seed);
}

template <typename T>
SegModel<T>::SegModel(SegModelConfig config, ParameterSet<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const SegModel<T> reference(config_, 0);
  if (reference.params().size() != params_.size()) {
    throw ConfigError("parameter set does not match the model configuration (" +
                      std::to_string(params_.size()) + " tensors, expected " +
                      std::to_string(reference.params().size()) + ")");
  }
  for (const auto& e : reference.params().entries()) {
    if (!params_.contains(e.name) || params_[e.name].shape() != e.tensor.shape()) {
      throw ConfigError("parameter '" + e.name + "' missing or mis-shaped for this configuration");
    }
  }
}

template <typename T>
void SegModel<T>::check_input(const Tensor<T>& x, const char* what) const {
  const Shape expect{1, config_.in_channels, config_.patch, config_.patch};
  if (x.shape() != expect) {
    throw DimensionError(std::string(what) + " has shape " + to_string(x.shape()) + ", expected " +
                         to_string(expect));
  }
}

template <typename T>
Tensor<T> SegModel<T>::encode(const Tensor<T>& x) const {
  check_input(x, "encoder input");
  Tensor<T> h = x;
  for (std::size_t i = 0; i < config_.enc_channels.size(); ++i) {
    if (i > 0) h = max_pool2d(h, 2, 2);
    h = conv_relu(params_, "encoder.conv" + std::to_string(i + 1), h);
  }
  return h;
}

template <typename T>
FusionResult<T> SegModel<T>::fuse(const std::vector<Tensor<T>>& features) const {
  if (static_cast<Index>(features.size()) != config_.context_count()) {
    throw ConfigError("fuse: expected " + std::to_string(config_.context_count()) +
                      " feature maps, got " + std::to_string(features.size()));
  }
  if (config_.fusion == FusionMode::Average) {
    return fctl::fuse<T>(features, {}, {}, {}, {}, FusionMode::Average);
  }
  return fctl::fuse(features, params_["fusion.squeeze.weight"], params_["fusion.squeeze.bias"],
                    params_["fusion.split.weight"], params_["fusion.split.bias"], FusionMode::Adaptive);
}

template <typename T>
Tensor<T> SegModel<T>::decode(const Tensor<T>& features) const {
  Tensor<T> h = features;
  for (std::size_t i = 0; i < config_.dec_channels.size(); ++i) {
    h = conv_relu(params_, "decoder.conv" + std::to_string(i + 1), h);
    h = upsample_bilinear(h, 2);
  }
  return conv_plain(params_, "decoder.head", h);
}

template <typename T>
SegOutput<T> SegModel<T>::forward(const Tensor<T>& patch, const std::vector<Tensor<T>>& contexts) const {
  if (static_cast<Index>(contexts.size()) != config_.context_count()) {
    throw ConfigError("seg_forward: expected " + std::to_string(config_.context_count()) +
                      " contexts, got " + std::to_string(contexts.size()));
  }
  check_input(patch, "patch");
  const Tensor<T> local = encode(patch);
  SegOutput<T> out;
  if (contexts.empty()) {
    out.logits = decode(local);
    return out;
  }
  std::vector<Tensor<T>> attended;
  for (std::size_t t = 0; t < contexts.size(); ++t) {
    check_input(contexts[t], "context");
    // A unit-scale context is the patch itself; shared weights make its features identical.
    const bool reuse = is_unit_scale(config_.contexts[t]) && same_values(contexts[t], patch);
    const Tensor<T> ctx = reuse ? local : encode(contexts[t]);
    attended.push_back(lcc(local, ctx, config_.aggregate));
  }
  FusionResult<T> fused = fuse(attended);
  out.fusion_weights = fused.weights;
  out.logits = decode(add(fused.fused, local));
  return out;
}

// ----------------------------------------------------------------- RefineNet

template <typename T>
RefineNet<T>::RefineNet(RefineConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const Index c1 = config_.channels[0], c2 = config_.channels[1], k = config_.num_classes;
  for (const char* stream : {"local", "context"}) {
    const std::string p = std::string("refine.") + stream;
    add_conv(params_, p + ".conv1", c1, k, 3, seed);
    add_conv(params_, p + ".conv2", c2, c1, 3, seed);
  }
  add_conv(params_, "refine.decoder.conv1", c2, c2 + c2, 3, seed);
  add_conv(params_, "refine.decoder.conv2", c1, c2 + c1, 3, seed);
  add_conv(params_, "refine.head", k, c1, 1, seed);
}

template <typename T>
RefineNet<T>::RefineNet(RefineConfig config, ParameterSet<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const RefineNet<T> reference(config_, 0);
  if (reference.params().size() != params_.size()) {
    throw ConfigError("parameter set does not match the refinement configuration");
  }
  for (const auto& e : reference.params().entries()) {
    if (!params_.contains(e.name) || params_[e.name].shape() != e.tensor.shape()) {
      throw ConfigError("parameter '" + e.name + "' missing or mis-shaped for this configuration");
    }
  }
}

template <typename T>
Tensor<T> RefineNet<T>::forward(const Tensor<T>& local_prob, const Tensor<T>& context_prob) const {
  const Shape expect{1, config_.num_classes, config_.patch, config_.patch};
  if (local_prob.shape() != expect || context_prob.shape() != expect) {
    throw DimensionError("refine_forward: inputs " + to_string(local_prob.shape()) + " / " +
                         to_string(context_prob.shape()) + " must both be " + to_string(expect));
  }
  const Tensor<T> l1 = conv_relu(params_, "refine.local.conv1", local_prob);
  const Tensor<T> l2 = conv_relu(params_, "refine.local.conv2", max_pool2d(l1, 2, 2));
  const Tensor<T> lb = max_pool2d(l2, 2, 2);
  const Tensor<T> c1 = conv_relu(params_, "refine.context.conv1", context_prob);
  const Tensor<T> c2 = conv_relu(params_, "refine.context.conv2", max_pool2d(c1, 2, 2));
  const Tensor<T> cb = max_pool2d(c2, 2, 2);

  const Tensor<T> bottleneck = add(lcc(lb, cb, config_.aggregate), lb);
  const Tensor<T> d1 =
      conv_relu(params_, "refine.decoder.conv1", concat<T>({upsample_bilinear(bottleneck, 2), l2}, 1));
  const Tensor<T> d2 = conv_relu(params_, "refine.decoder.conv2", concat<T>({upsample_bilinear(d1, 2), l1}, 1));
  return conv_plain(params_, "refine.head", d2);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<double> ParameterSet<float>::cast<double>() const;
template ParameterSet<float> ParameterSet<double>::cast<float>() const;
template ParameterSet<float> ParameterSet<float>::cast<float>() const;
template ParameterSet<double> ParameterSet<double>::cast<double>() const;
template class SegModel<float>;
template class SegModel<double>;
template class RefineNet<float>;
template class RefineNet<double>;

#define FCTL_INSTANTIATE(T)                                                                  \
  template Tensor<T> lcc(const Tensor<T>&, const Tensor<T>&, Aggregate);                     \
  template Tensor<T> relevance_map(const Tensor<T>&, const Tensor<T>&);                      \
  template FusionResult<T> fuse(const std::vector<Tensor<T>>&, const Tensor<T>&,             \
                                const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, FusionMode);

FCTL_INSTANTIATE(float)
FCTL_INSTANTIATE(double)
#undef FCTL_INSTANTIATE

}  // namespace fctl
