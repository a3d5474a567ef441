#include "eamamba/graph.hpp"

#include "eamamba/errors.hpp"

namespace eamamba {

template <typename T>
Var<T> Graph<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  n.leaf = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.owned = std::move(value);
  n.leaf = true;
  n.requires_grad = requires_grad && grad_enabled_;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::parameter(Parameter<T>& p) {
  if (auto it = bound_params_.find(&p); it != bound_params_.end())
    return Var<T>(this, it->second);
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>::zeros(p.value.shape());
  Node n;
  n.op = "parameter";
  n.external = &p.value;
  n.grad_target = &p.grad;
  n.leaf = true;
  n.requires_grad = grad_enabled_;
  Var<T> v = push(std::move(n));
  bound_params_.emplace(&p, v.id());
  return v;
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, Tensor<T> value, std::span<const Var<T>> inputs,
                        Backward backward, std::uint64_t macs) {
  if (check_finite_ && !value.all_finite())
    throw NumericError(std::string(op) + " produced non-finite values");
  Node n;
  n.op = op;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var<T>& in : inputs) {
      if (&in.graph() != this) throw ContractError("operand recorded on a different graph");
      if (nodes_[in.id()].requires_grad) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  if (macs) {
    macs_ += macs;
    auto it = macs_by_op_.find(op);
    if (it == macs_by_op_.end())
      macs_by_op_.emplace(std::string(op), macs);
    else
      it->second += macs;
  }
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Graph<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
Tensor<T>* Graph<T>::grad_sink(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (n.grad_target) return n.grad_target;
  if (n.grad.empty()) n.grad = Tensor<T>::zeros(value(id).shape());
  return &n.grad;
}

template <typename T>
const Tensor<T>* Graph<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad_target) return n.grad_target;
  return n.grad.empty() ? nullptr : &n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> output) {
  if (&output.graph() != this) throw ContractError("backward: output belongs to another graph");
  if (value(output.id()).size() != 1)
    throw ContractError("backward requires a scalar output, got shape " +
                        shape_str(value(output.id()).shape()));
  if (!nodes_[output.id()].requires_grad) return;

  for (Node& n : nodes_)
    if (!n.leaf) n.grad = Tensor<T>();

  (*grad_sink(output.id()))[0] += T(1);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.leaf || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
    n.grad = Tensor<T>();
  }
}

template <typename T>
void Graph<T>::zero_grad() {
  for (Node& n : nodes_) {
    if (n.grad_target) n.grad_target->fill(T(0));
    n.grad = Tensor<T>();
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace eamamba
