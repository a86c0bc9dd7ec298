#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ccreid/autograd.hpp"

namespace ccreid {

// Differentiable operations. Each takes the tape it records on, never
// broadcasts, and throws ShapeError on any shape it does not accept.

enum class ElementwiseKind { Add, Sub, Mul, Abs, Relu, Sigmoid };
enum class ReduceKind { Sum, Mean };

/// `b` must be set for binary kinds and empty for unary ones.
template <class Real>
Var<Real> elementwise(Tape<Real>& tape, ElementwiseKind kind, const Var<Real>& a,
                      const Var<Real>& b = Var<Real>());

template <class Real>
Var<Real> add(Tape<Real>& t, const Var<Real>& a, const Var<Real>& b) {
  return elementwise(t, ElementwiseKind::Add, a, b);
}
template <class Real>
Var<Real> sub(Tape<Real>& t, const Var<Real>& a, const Var<Real>& b) {
  return elementwise(t, ElementwiseKind::Sub, a, b);
}
template <class Real>
Var<Real> mul(Tape<Real>& t, const Var<Real>& a, const Var<Real>& b) {
  return elementwise(t, ElementwiseKind::Mul, a, b);
}
/// Subgradient sign(x), with sign(0) = 0.
template <class Real>
Var<Real> abs(Tape<Real>& t, const Var<Real>& a) {
  return elementwise(t, ElementwiseKind::Abs, a);
}
/// Subgradient 0 at x = 0.
template <class Real>
Var<Real> relu(Tape<Real>& t, const Var<Real>& a) {
  return elementwise(t, ElementwiseKind::Relu, a);
}
template <class Real>
Var<Real> sigmoid(Tape<Real>& t, const Var<Real>& a) {
  return elementwise(t, ElementwiseKind::Sigmoid, a);
}

/// Reduces over `axes` (all axes when empty optional). Reduced axes are removed.
template <class Real>
Var<Real> reduce(Tape<Real>& tape, ReduceKind kind, const Var<Real>& a,
                 std::optional<std::vector<std::size_t>> axes = std::nullopt);

template <class Real>
Var<Real> sum(Tape<Real>& t, const Var<Real>& a) {
  return reduce(t, ReduceKind::Sum, a);
}
template <class Real>
Var<Real> mean(Tape<Real>& t, const Var<Real>& a) {
  return reduce(t, ReduceKind::Mean, a);
}

/// a * c for a constant c.
template <class Real>
Var<Real> scale(Tape<Real>& tape, const Var<Real>& a, Real c);

/// Window (C,h,w) of a (C,H,W) tensor at row i, column j. Backward scatter-adds.
template <class Real>
Var<Real> crop(Tape<Real>& tape, const Var<Real>& a, std::size_t i, std::size_t j,
               std::size_t h, std::size_t w);

/// Zero border of p pixels around every channel of a (C,H,W) tensor.
template <class Real>
Var<Real> pad_zero(Tape<Real>& tape, const Var<Real>& a, std::size_t p);

/// W(out,in) * x(in) + bias(out); bias may be null.
template <class Real>
Var<Real> matvec(Tape<Real>& tape, const Var<Real>& W, const Var<Real>& x,
                 const Var<Real>& bias = Var<Real>());

/// Valid-or-padded 2-D cross-correlation of x(C,H,W) with weight(O,C,kh,kw).
template <class Real>
Var<Real> conv2d(Tape<Real>& tape, const Var<Real>& x, const Var<Real>& weight,
                 const Var<Real>& bias, std::size_t stride, std::size_t pad);

template <class Real>
Var<Real> reshape(Tape<Real>& tape, const Var<Real>& a, Shape shape);

/// Stacks equally shaped tensors along a new leading axis.
template <class Real>
Var<Real> stack(Tape<Real>& tape, std::span<const Var<Real>> parts);

/// Numerically stable softmax over a rank-1 tensor. Rejects non-finite logits.
template <class Real>
Var<Real> softmax(Tape<Real>& tape, const Var<Real>& logits);

/// Standardizes a (C,H,W) tensor over all of its elements, then applies a
/// per-channel gain and offset: gamma[c] * (x - mean) / sqrt(var + eps) + beta[c].
template <class Real>
Var<Real> layer_norm(Tape<Real>& tape, const Var<Real>& x, const Var<Real>& gamma,
                     const Var<Real>& beta, Real eps);

/// Plain-value helpers that bypass the graph.
template <class Real>
Var<Real> constant(Tensor<Real> value) {
  return Var<Real>::leaf(std::move(value), false);
}

}  // namespace ccreid
