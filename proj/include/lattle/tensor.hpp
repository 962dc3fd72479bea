#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lattle/errors.hpp"

namespace lattle {

template <class S>
class Tensor;

namespace detail {

template <class S>
struct TensorNode {
  std::vector<int> shape;
  std::vector<S> data;
  std::vector<S> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  bool frozen = false;
  bool backward_done = false;
  std::string name;  // set for named parameters
  std::vector<Tensor<S>> parents;
  std::function<void()> backward_fn;

  std::size_t numel() const {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }
};

}  // namespace detail

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor participating in a reverse-mode autodiff graph.
// Value semantics over a shared node: copies alias the same storage, which is
// what the graph edges need. A frozen tensor still receives gradients; only
// the optimizer treats it as immutable.
template <class S>
class Tensor {
 public:
  using Node = detail::TensorNode<S>;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    check_shape(t.node_->shape);
    t.node_->data.assign(t.node_->numel(), S(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(std::vector<int> shape, S value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (S& v : t.node_->data) v = value;
    return t;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<S> data,
                          bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    check_shape(t.node_->shape);
    if (t.node_->numel() != data.size())
      throw ShapeError("from_data: shape " + shape_str(t.node_->shape) + " wants " +
                       std::to_string(t.node_->numel()) + " values, got " +
                       std::to_string(data.size()));
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(S value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->numel(); }

  S* data() { return node_->data.data(); }
  const S* data() const { return node_->data.data(); }
  std::vector<S>& data_vec() { return node_->data; }
  const std::vector<S>& data_vec() const { return node_->data; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  S* grad() { return node_->grad.data(); }
  const S* grad() const { return node_->grad.data(); }
  const std::vector<S>& grad_vec() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  bool frozen() const { return node_->frozen; }
  void set_frozen(bool b) { node_->frozen = b; }
  const std::string& name() const { return node_->name; }
  void set_name(std::string n) { node_->name = std::move(n); }

  S item() const {
    if (numel() != 1)
      throw ShapeError("item: tensor has shape " + shape_str(node_->shape));
    return node_->data[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), S(0));
  }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  Node* node() const { return node_.get(); }

  // Graph construction used by the op layer: the output of an op gets its
  // parents recorded and a closure that scatters grad into them.
  void set_parents(std::vector<Tensor> parents) {
    node_->parents = std::move(parents);
    node_->requires_grad = false;
    for (const Tensor& p : node_->parents)
      if (p.requires_grad()) node_->requires_grad = true;
  }
  void set_backward(std::function<void()> fn) { node_->backward_fn = std::move(fn); }

  // Reverse-topological traversal from a scalar loss. Each reachable node is
  // visited exactly once; a second call on the same root is an error.
  void backward() {
    if (numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(node_->shape));
    if (node_->backward_done)
      throw TrainingError("backward: already ran on this graph; run a new forward pass");
    if (!node_->requires_grad)
      throw TrainingError("backward: loss does not require grad");

    std::vector<Node*> topo;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [nd, next] = stack.back();
      if (next < nd->parents.size()) {
        Node* p = nd->parents[next].node();
        ++next;
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        topo.push_back(nd);
        stack.pop_back();
      }
    }

    node_->ensure_grad();
    node_->grad[0] = S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn();
    }
    node_->backward_done = true;
  }

 private:
  static void check_shape(const std::vector<int>& shape) {
    for (int e : shape)
      if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace lattle
