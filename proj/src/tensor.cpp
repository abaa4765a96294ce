#include "gapccot/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "gapccot/errors.hpp"

namespace gapccot {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
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

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (gapccot::numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape));
  }
  node_ = std::make_shared<TensorNode<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = gapccot::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> data,
                             std::vector<std::shared_ptr<TensorNode<T>>> parents,
                             std::function<void(TensorNode<T>&)> backward) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!g_grad_enabled) return out;
  bool any = std::any_of(parents.begin(), parents.end(),
                         [](const auto& p) { return p && p->requires_grad; });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->is_leaf = false;
  out.node_->parents = std::move(parents);
  out.node_->backward = std::move(backward);
  return out;
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order with parents first.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode<T>* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->is_leaf) node->grad.assign(node->data.size(), T(0));
  }
  grad_buffer(*node_)[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (node->backward) node->backward(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gapccot
