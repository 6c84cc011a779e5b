#include "rmgen/numerics/tape.hpp"

#include <string>

#include "rmgen/common/error.hpp"

namespace rmgen::num {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(const Tensor& external, bool requires_grad) {
  Node n;
  n.value = &external;
  n.requires_grad = record_ && requires_grad;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::make_unique<Tensor>(std::move(value));
  n.value = n.owned.get();
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::make_unique<Tensor>(std::move(value));
  n.value = n.owned.get();
  n.requires_grad = record_;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward fn,
                 std::string_view op) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  Node n;
  n.owned = std::make_unique<Tensor>(std::move(value));
  n.value = n.owned.get();
  if (record_) {
    for (const Var& in : inputs) {
      require(in.valid() && &in.tape() == this, "op input belongs to another tape");
      if (nodes_[in.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value->shape(), 0.0);
  return n.grad;
}

void Tape::backward(const Var& out) {
  require(record_, "backward() on a non-recording tape");
  require(&out.tape() == this, "backward() target belongs to another tape");
  require(out.value().size() == 1, "backward() needs a scalar objective");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[out.id()].requires_grad) return;
  grad_buffer(out.id()).fill(1.0);
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value->shape(), 0.0);
  return n.grad;
}

}  // namespace rmgen::num
