#include "fctl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fctl {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool t_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + to_string(shape));
  }
}
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != static_cast<Index>(data.size())) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  node_ = std::make_shared<NodeType>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  const Index n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value),
                requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::of(Shape shape, std::initializer_list<T> values) {
  return Tensor(std::move(shape), std::vector<T>(values));
}

template <typename T>
Index Tensor<T>::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ArgumentError("axis " + std::to_string(axis) + " out of range for shape " +
                        to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ArgumentError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<Index> idx) const {
  if (static_cast<int>(idx.size()) != rank()) throw ArgumentError("at(): rank mismatch");
  Index flat = 0;
  int axis = 0;
  for (Index i : idx) {
    const Index d = node_->shape[static_cast<std::size_t>(axis)];
    if (i < 0 || i >= d) throw ArgumentError("at(): index out of range on axis " + std::to_string(axis));
    flat = flat * d + i;
    ++axis;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph) {
  using NodeT = detail::Node<T>;
  if (!loss.defined() || loss.size() != 1) {
    throw ArgumentError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order with each node once.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  NodeT* root = loss.node().get();
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->is_leaf()) continue;
    if (!node->grad.empty()) node->backward_fn(*node);
  }
  // Interior grads are scratch space; keeping them would double-count on a
  // second pass over a retained graph.
  for (NodeT* node : order) {
    if (node->is_leaf()) continue;
    node->grad.clear();
    node->grad.shrink_to_fit();
    if (!retain_graph) {
      node->backward_fn = nullptr;
      node->inputs.clear();
    }
  }
}

namespace detail {

template <typename T>
static void check_finite(const std::vector<T>& data, const char* op,
                         const std::vector<const Node<T>*>& inputs) {
#ifndef NDEBUG
  auto finite = [](const std::vector<T>& v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
  };
  for (const auto* in : inputs) {
    if (!finite(in->data)) return;
  }
  if (!finite(data)) throw StateError(std::string("non-finite output from op ") + op);
#else
  (void)data;
  (void)op;
  (void)inputs;
#endif
}

template <typename T>
static Tensor<T> finish(Shape shape, std::vector<T> data, const char* op,
                        std::vector<std::shared_ptr<Node<T>>> inputs,
                        std::function<void(Node<T>&)> backward_fn) {
  {
    std::vector<const Node<T>*> raw;
    for (const auto& p : inputs) raw.push_back(p.get());
    check_finite(data, op, raw);
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool track = grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const auto& p) {
                       return p->requires_grad;
                     });
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const Tensor<T>* t : inputs) {
    if (t && t->defined()) nodes.push_back(t->node());
  }
  return finish(std::move(shape), std::move(data), op, std::move(nodes), std::move(backward_fn));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const Tensor<T>& t : inputs) nodes.push_back(t.node());
  return finish(std::move(shape), std::move(data), op, std::move(nodes), std::move(backward_fn));
}

template Tensor<float> make_result(Shape, std::vector<float>, const char*,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const char*,
                                   const std::vector<Tensor<float>>&,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*,
                                    const std::vector<Tensor<double>>&,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&, bool);
template void backward(const Tensor<double>&, bool);

}  // namespace fctl
