#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fctl/error.hpp"

namespace fctl {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. Non-leaf nodes carry the closure that
// pushes this node's grad into its inputs.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
  }
  bool is_leaf() const { return !backward_fn; }
};

}  // namespace detail

/// Graph recording is thread-local; inference threads disable it.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Shared handle to a dense row-major array plus its autograd node.
///
/// Copies alias the same storage. Data is treated as immutable once the tensor
/// has been used as an op input; only leaves (parameters) are updated in place,
/// and only by the single training thread.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor of(Shape shape, std::initializer_list<T> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return static_cast<Index>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(std::initializer_list<Index> idx) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the values with no graph attached.
  Tensor detach() const;
  const char* op_name() const { return node_->op; }

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Reverse pass from a scalar. Gradients are accumulated (+=) into every
/// reachable node that requires grad. Intermediate links are dropped afterwards
/// unless `retain_graph` is set.
template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph = false);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward(const Tensor<float>&, bool);
extern template void backward(const Tensor<double>&, bool);

namespace detail {

/// Wraps a freshly computed forward result. Records the backward closure only
/// when grad mode is on and some input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn);

}  // namespace detail

}  // namespace fctl
