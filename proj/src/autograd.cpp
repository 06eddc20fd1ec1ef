#include "simmp/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "simmp/errors.hpp"

namespace simmp {

namespace {
std::atomic<std::uint64_t> g_next_order{1};

void require_defined(const Var& v) {
  if (!v.defined()) throw ContractError("use of an undefined Var");
}
}  // namespace

Tensor& detail::Node::grad_buffer() {
  if (grad.empty()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NonFiniteError("leaf value contains NaN/Inf");
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->order = g_next_order.fetch_add(1);
  return Var(std::move(node));
}

const Tensor& Var::value() const {
  require_defined(*this);
  return node_->value;
}

bool Var::requires_grad() const {
  require_defined(*this);
  return node_->requires_grad;
}

Tensor Var::grad() const {
  require_defined(*this);
  if (node_->grad.empty()) return Tensor::zeros(node_->value.shape());
  return node_->grad;
}

bool Var::has_grad() const { return node_ && !node_->grad.empty(); }

void Var::zero_grad() {
  require_defined(*this);
  node_->grad = Tensor();
}

Tensor& Var::mutable_value() {
  require_defined(*this);
  if (node_->backward) throw ContractError("only leaf values may be modified in place");
  return node_->value;
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NonFiniteError("operation produced NaN/Inf, shape " + shape_str(value.shape()));
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->order = g_next_order.fetch_add(1);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.defined() && v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
  }
  return Var(std::move(node));
}

GradTape GradTape::record(const Var& loss) {
  require_defined(loss);
  GradTape tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!n || !n->requires_grad || !seen.insert(n).second) continue;
    tape.nodes_.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  // Creation order is a topological order; replay newest first.
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->order > b->order; });
  return tape;
}

void GradTape::replay(const Var& loss) const {
  for (detail::Node* n : nodes_) {
    if (n->backward) n->grad = Tensor();
  }
  detail::Node* root = loss.node();
  if (root->backward) {
    root->grad_buffer().fill(1.0);
  } else {
    root->grad_buffer()[0] += 1.0;
  }
  for (detail::Node* n : nodes_) {
    if (!n->backward || n->grad.empty()) continue;
    n->backward(n->grad, n->value);
    // Interior adjoints are dead once propagated.
    if (n != root) n->grad = Tensor();
  }
}

void backward(const Var& loss) {
  require_defined(loss);
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  GradTape::record(loss).replay(loss);
}

}  // namespace simmp
