#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "simmp/tensor.hpp"

namespace simmp {

namespace detail {
struct Node;
}

// (d loss / d output, output value)
using BackwardFn = std::function<void(const Tensor& grad, const Tensor& value)>;

// Handle to a value in the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;

  // Trainable or constant leaf.
  static Var leaf(Tensor value, bool requires_grad = true);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool defined() const { return node_ != nullptr; }

  // Gradient accumulated by backward(); an all-zero tensor before the first call.
  Tensor grad() const;
  bool has_grad() const;
  void zero_grad();

  // Leaves only: in-place value update (optimizer step, finite-difference probes).
  Tensor& mutable_value();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Var make_op(Tensor, std::vector<Var>, BackwardFn);
};

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Receives this node's output gradient and adds into the inputs' grads.
  BackwardFn backward;
  std::uint64_t order = 0;

  // Lazily allocated gradient buffer of the value's shape.
  Tensor& grad_buffer();
};
}  // namespace detail

// Records an operation result. `backward` is kept only if some input requires a
// gradient; it receives d(loss)/d(output) plus the output value and accumulates into
// `inputs[i].node()->grad_buffer()` for inputs that require grad.
// Throws NonFiniteError if `value` contains NaN or Inf.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward);

// Reverse-ordered record of the operations reachable from a scalar loss.
class GradTape {
 public:
  static GradTape record(const Var& loss);

  // Runs every recorded adjoint exactly once, newest first.
  void replay(const Var& loss) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<detail::Node*> nodes_;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
// Interior gradients are reset on each call, leaf gradients add up.
void backward(const Var& loss);

}  // namespace simmp
