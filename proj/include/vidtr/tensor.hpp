#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "vidtr/errors.hpp"

namespace vidtr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

enum class Precision { Single, Double };

template <class Real>
inline constexpr Precision precision_of =
    std::is_same_v<Real, double> ? Precision::Double : Precision::Single;

/// Whether new operations record themselves on the gradient tape.
/// Thread-local, so inference threads can disable recording independently.
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

namespace detail {

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<Real>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

}  // namespace detail

/// Dense row-major array with optional participation in a dynamic gradient
/// tape. Copies share the underlying node (handle semantics, like an
/// autograd variable); use clone() or detach() for an independent copy.
template <class Real>
class Tensor {
 public:
  using value_type = Real;
  using NodeT = detail::Node<Real>;
  using NodePtr = std::shared_ptr<NodeT>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor scalar(Real value);
  static Tensor full(Shape shape, Real value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_ ? node_->value.size() : 0; }

  std::span<const Real> values() const { return node_->value; }
  /// Direct write access; intended for leaves (parameters, inputs).
  std::span<Real> mutable_values() { return node_->value; }
  Real item() const;
  Real at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Reverse sweep from a scalar root (seed 1).
  void backward() const;
  /// Reverse sweep from an arbitrary root with an explicit seed gradient.
  void backward(std::span<const Real> seed) const;

  /// Copy of the values with no tape history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Build an op result. Records the backward closure only when grad mode is
  /// on and at least one parent requires grad.
  static Tensor from_op(Shape shape, std::vector<Real> values,
                        std::vector<Tensor> parents,
                        std::function<void(NodeT&)> backward);

  const NodePtr& node_ptr() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Accumulate `delta` into a parent's gradient when it participates.
template <class Real>
inline void accumulate_grad(detail::Node<Real>& parent,
                            std::span<const Real> delta) {
  if (!parent.requires_grad) return;
  auto& g = parent.grad_buffer();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

extern template class Tensor<float>;
extern template class Tensor<double>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace vidtr
