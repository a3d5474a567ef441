#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

#include "eamamba/tensor.hpp"

namespace eamamba {

// Trainable tensor with its gradient accumulator. The accumulator always has
// the value's shape; graphs add into it during backward.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() { grad.fill(T(0)); }
  std::size_t size() const { return value.size(); }
};

template <typename T>
class Graph;

// Handle to a value recorded on a Graph.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Record-and-replay tape over the fixed operation set. Nodes are appended in
// execution order, so reverse iteration is a valid topological order.
// Not thread-safe: one graph is built by one execution context.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  // Leaf that reads the parameter's value in place and accumulates into its
  // grad. Binding the same parameter twice returns the same node.
  Var<T> parameter(Parameter<T>& p);

  // Appends an operation result. `macs` is the multiply-accumulate count the
  // operation performed; it feeds the op-level cost counter.
  Var<T> record(std::string_view op, Tensor<T> value, std::span<const Var<T>> inputs,
                Backward backward, std::uint64_t macs = 0);
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                Backward backward, std::uint64_t macs = 0) {
    return record(op, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(backward), macs);
  }

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Gradient accumulator for node `id`, allocated on first use; nullptr when
  // the node does not need a gradient.
  Tensor<T>* grad_sink(std::size_t id);

  // Gradient held by a leaf after backward; nullptr if none was produced.
  const Tensor<T>* grad(Var<T> v) const;

  // Seeds d(output)/d(output) = 1 and propagates to every leaf. Leaf
  // gradients accumulate across calls; interior gradients do not.
  void backward(Var<T> output);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t macs() const noexcept { return macs_; }
  const std::map<std::string, std::uint64_t, std::less<>>& macs_by_op() const noexcept {
    return macs_by_op_;
  }

  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Tensor<T>* grad_target = nullptr;
    bool requires_grad = false;
    bool leaf = false;
    Backward backward;
  };

  Var<T> push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> bound_params_;
  std::map<std::string, std::uint64_t, std::less<>> macs_by_op_;
  std::uint64_t macs_ = 0;
  bool grad_enabled_ = true;
  bool check_finite_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace eamamba
