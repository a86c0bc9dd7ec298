#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "ccreid/tensor.hpp"

namespace ccreid {

template <class Real>
struct Node;

template <class Real>
using BackwardFn = std::function<void(Node<Real>&)>;

/// One value in the computation graph. Leaves have no inputs and no backward rule.
template <class Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn<Real> backward;

  bool has_grad() const noexcept { return !grad.empty(); }

  /// Gradient buffer, allocated as zeros on first use.
  Tensor<Real>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Real>(value.shape());
    return grad;
  }
};

/// Shared handle to a graph node. Copies alias the same node.
template <class Real>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  /// Leaf holding `value`. Parameters are leaves with requires_grad set.
  static Var leaf(Tensor<Real> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  const Tensor<Real>& value() const { return node_->value; }
  Tensor<Real>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_->has_grad(); }
  const Tensor<Real>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<Real>(); }

  Node<Real>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<Real>>& ptr() const noexcept { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

  friend bool operator==(const Var& a, const Var& b) { return a.node_ == b.node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

/// Ordered record of differentiable operations for one forward/backward pass.
/// A non-recording tape computes values only and keeps no graph.
template <class Real>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Creates the output node of an operation. The backward rule and inputs are
  /// kept only when recording and at least one input requires a gradient.
  Var<Real> record(Tensor<Real> value, std::vector<Var<Real>> inputs, BackwardFn<Real> backward);

  /// Propagates d(loss)/d(node) to every reachable requires_grad leaf.
  /// Leaf gradients accumulate across calls until zeroed.
  void backward(const Var<Real>& loss);

  void clear() { nodes_.clear(); }

  /// When enabled, abs and relu report their inputs and the tape keeps the
  /// smallest |x| over relu inputs and non-zero abs inputs.
  void track_kinks(bool on) noexcept { track_kinks_ = on; }
  bool tracking_kinks() const noexcept { return track_kinks_; }
  void note_kink_inputs(std::span<const Real> x, bool skip_zeros) noexcept {
    for (Real v : x) {
      const Real m = v < 0 ? -v : v;
      if (skip_zeros && m == Real(0)) continue;
      if (m < kink_margin_) kink_margin_ = m;
    }
  }
  Real kink_margin() const noexcept { return kink_margin_; }

 private:
  bool recording_;
  bool track_kinks_ = false;
  Real kink_margin_ = std::numeric_limits<Real>::infinity();
  std::vector<std::shared_ptr<Node<Real>>> nodes_;
};

template <class Real>
void backward(const Var<Real>& loss, Tape<Real>& tape) {
  tape.backward(loss);
}

/// Adds `g` into the gradient of `n` when it takes one.
template <class Real>
inline void accumulate_grad(Node<Real>& n, std::span<const Real> g) {
  if (!n.requires_grad) return;
  auto dst = n.grad_buffer().data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace ccreid
