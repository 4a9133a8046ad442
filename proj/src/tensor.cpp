#include "vidtr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace vidtr {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class Real>
Tensor<Real>::Tensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<NodeT>()) {
  for (auto e : shape)
    if (e == 0)
      throw DimensionError("tensor extents must be positive, got " +
                           shape_string(shape));
  node_->value.assign(shape_size(shape), Real(0));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <class Real>
Tensor<Real>::Tensor(Shape shape, std::vector<Real> values, bool requires_grad)
    : node_(std::make_shared<NodeT>()) {
  for (auto e : shape)
    if (e == 0)
      throw DimensionError("tensor extents must be positive, got " +
                           shape_string(shape));
  if (shape_size(shape) != values.size())
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <class Real>
Tensor<Real> Tensor<Real>::scalar(Real value) {
  return Tensor(Shape{1}, std::vector<Real>{value});
}

template <class Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value) {
  std::vector<Real> v(shape_size(shape), value);
  return Tensor(std::move(shape), std::move(v));
}

template <class Real>
std::size_t Tensor<Real>::dim(std::size_t axis) const {
  if (axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for " + shape_string(shape()));
  return node_->shape[axis];
}

template <class Real>
Real Tensor<Real>::item() const {
  if (size() != 1)
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <class Real>
Real Tensor<Real>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank())
    throw DimensionError("index rank mismatch for " + shape_string(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis])
      throw DimensionError("index out of range for " + shape_string(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

template <class Real>
Tensor<Real> Tensor<Real>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <class Real>
Tensor<Real> Tensor<Real>::from_op(Shape shape, std::vector<Real> values,
                                   std::vector<Tensor> parents,
                                   std::function<void(NodeT&)> backward) {
  auto node = std::make_shared<NodeT>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  if (grad_enabled()) {
    bool any = std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& p) { return p.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

template <class Real>
void Tensor<Real>::backward() const {
  if (size() != 1)
    throw DimensionError("backward() without seed needs a scalar root, got " +
                         shape_string(shape()));
  const Real one = 1;
  backward(std::span<const Real>(&one, 1));
}

template <class Real>
void Tensor<Real>::backward(std::span<const Real> seed) const {
  if (seed.size() != size())
    throw DimensionError("backward seed size mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order. The order holds
  // owning pointers because the sweep below releases parent links.
  std::vector<NodePtr> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(node_, 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      NodePtr parent = top.first->parents[top.second++];
      if (parent->requires_grad && !visited.count(parent.get())) {
        visited.insert(parent.get());
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  auto& root_grad = node_->grad_buffer();
  for (std::size_t i = 0; i < seed.size(); ++i) root_grad[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = it->get();
    if (node->is_leaf()) continue;
    if (!node->grad.empty()) node->backward(*node);
    // Release the recorded graph; intermediate grads are not retained.
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->backward = nullptr;
    node->parents.clear();
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace vidtr
