#include "ccreid/autograd.hpp"

#include <algorithm>

namespace ccreid {

template <class Real>
Var<Real> Tape<Real>::record(Tensor<Real> value, std::vector<Var<Real>> inputs,
                             BackwardFn<Real> backward) {
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  const bool needs = recording_ && std::any_of(inputs.begin(), inputs.end(),
                                               [](const Var<Real>& v) { return v.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.ptr());
    node->backward = std::move(backward);
    nodes_.push_back(node);
  }
  return Var<Real>(std::move(node));
}

template <class Real>
void Tape<Real>::backward(const Var<Real>& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Intermediate gradients are per-pass; only leaves accumulate.
  for (auto& n : nodes_) n->grad = Tensor<Real>();
  Node<Real>& root = *loss.node();
  root.grad_buffer()[0] += Real(1);

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<Real>& n = **it;
    if (n.has_grad() && n.backward) n.backward(n);
  }
}

template class Tape<float>;
template class Tape<double>;
template class Tape<long double>;

}  // namespace ccreid
