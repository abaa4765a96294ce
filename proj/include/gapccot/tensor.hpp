#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gapccot {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means "no gradient yet"
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(TensorNode&)> backward;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// N-d value that participates in a reverse-mode autodiff graph.
///
/// Copies share the underlying node, so a Tensor behaves like a handle.
/// Data is immutable after construction except through mutable_data(),
/// which only parameters and optimizers should touch.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  /// Allocates a zero grad if none exists yet.
  std::span<T> mutable_grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across
  /// calls; intermediate grads are recomputed each call.
  void backward() const;

  TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

  /// Builds an op result. Parents and the backward closure are kept only
  /// when grad mode is on and some parent requires grad.
  static Tensor from_op(Shape shape, std::vector<T> data,
                        std::vector<std::shared_ptr<TensorNode<T>>> parents,
                        std::function<void(TensorNode<T>&)> backward);

 private:
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<TensorNode<T>> node_;
};

/// Allocates a zero grad on first use and returns it.
template <typename T>
std::vector<T>& grad_buffer(TensorNode<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), T(0));
  return node.grad;
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gapccot
