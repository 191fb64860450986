#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "nargen/tensor.hpp"

namespace nargen {

// Handle into a Tape. Plain index; cheap to copy into backward closures.
using Var = std::int32_t;

// Reverse-mode tape. Ops append nodes in execution order; backward seeds the
// loss gradient and replays every recorded closure exactly once, in reverse.
// Gradient accumulation order is therefore fixed by construction order,
// which keeps training bit-reproducible run to run.
//
// A tape is single-threaded and single-shot: build a graph, call backward
// once, read gradients off the leaves.
template <typename Scalar>
class Tape {
 public:
  // Closures receive the tape and their own node handle, and are expected to
  // accumulate into grad(input) for each input they captured.
  using BackwardFn = std::function<void(Tape&, Var)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf node (parameter or constant input).
  Var leaf(Tensor<Scalar> value) { return push(std::move(value), nullptr); }

  // Op node. In no-grad mode the closure is dropped at the door.
  Var op(Tensor<Scalar> value, BackwardFn back) {
    return push(std::move(value), grad_enabled_ ? std::move(back) : nullptr);
  }

  const Tensor<Scalar>& value(Var v) const { return nodes_[check(v)].value; }

  // Valid during and after backward().
  Tensor<Scalar>& grad(Var v) {
    Node& n = nodes_[check(v)];
    if (n.grad.empty() && n.value.size() > 0) {
      throw ContractError("Tape::grad before backward()");
    }
    return n.grad;
  }

  void backward(Var loss) {
    if (!grad_enabled_) throw ContractError("Tape::backward on a no-grad tape");
    if (backward_done_) throw ContractError("Tape::backward called twice");
    const Node& loss_node = nodes_[check(loss)];
    if (loss_node.value.size() != 1) {
      throw ContractError("Tape::backward expects a scalar loss, got " +
                          shape_string(loss_node.value.shape()));
    }
    backward_done_ = true;
    for (Node& n : nodes_) n.grad = Tensor<Scalar>(n.value.shape());
    nodes_[static_cast<std::size_t>(loss)].grad[0] = Scalar(1);
    for (Var i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back) n.back(*this, i);
    }
  }

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    BackwardFn back;
  };

  Var push(Tensor<Scalar> value, BackwardFn back) {
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>(), std::move(back)});
    return static_cast<Var>(nodes_.size() - 1);
  }

  std::size_t check(Var v) const {
    if (v < 0 || static_cast<std::size_t>(v) >= nodes_.size()) {
      throw ContractError("Tape: invalid var handle");
    }
    return static_cast<std::size_t>(v);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

}  // namespace nargen
