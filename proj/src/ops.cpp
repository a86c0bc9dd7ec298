#include "ccreid/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccreid/kernels.hpp"

namespace ccreid {

namespace {

template <class Real>
Real stable_sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

const char* kind_name(ElementwiseKind k) {
  switch (k) {
    case ElementwiseKind::Add: return "add";
    case ElementwiseKind::Sub: return "sub";
    case ElementwiseKind::Mul: return "mul";
    case ElementwiseKind::Abs: return "abs";
    case ElementwiseKind::Relu: return "relu";
    case ElementwiseKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

bool is_binary(ElementwiseKind k) {
  return k == ElementwiseKind::Add || k == ElementwiseKind::Sub || k == ElementwiseKind::Mul;
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

}  // namespace

template <class Real>
Var<Real> elementwise(Tape<Real>& tape, ElementwiseKind kind, const Var<Real>& a,
                      const Var<Real>& b) {
  const bool binary = is_binary(kind);
  if (binary != static_cast<bool>(b)) {
    throw ShapeError(std::string(kind_name(kind)) +
                     (binary ? ": second operand required" : ": takes one operand"));
  }
  if (binary && a.shape() != b.shape()) {
    throw ShapeError(std::string(kind_name(kind)) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }

  const auto& av = a.value();
  Tensor<Real> out(av.shape());
  auto y = out.data();
  auto x = av.data();
  switch (kind) {
    case ElementwiseKind::Add: {
      auto z = b.value().data();
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
      break;
    }
    case ElementwiseKind::Sub: {
      auto z = b.value().data();
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
      break;
    }
    case ElementwiseKind::Mul: {
      auto z = b.value().data();
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
      break;
    }
    case ElementwiseKind::Abs:
      if (tape.tracking_kinks()) tape.note_kink_inputs(x, true);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(x[i]);
      break;
    case ElementwiseKind::Relu:
      if (tape.tracking_kinks()) tape.note_kink_inputs(x, false);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] < 0 ? Real(0) : x[i];
      break;
    case ElementwiseKind::Sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = stable_sigmoid(x[i]);
      break;
  }

  std::vector<Var<Real>> inputs{a};
  if (binary) inputs.push_back(b);

  return tape.record(std::move(out), std::move(inputs), [kind](Node<Real>& self) {
    const auto g = self.grad.data();
    Node<Real>& na = *self.inputs[0];
    const std::size_t n = g.size();
    std::vector<Real> tmp(n);
    switch (kind) {
      case ElementwiseKind::Add:
        accumulate_grad<Real>(na, g);
        accumulate_grad<Real>(*self.inputs[1], g);
        break;
      case ElementwiseKind::Sub:
        accumulate_grad<Real>(na, g);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = -g[i];
        accumulate_grad<Real>(*self.inputs[1], tmp);
        break;
      case ElementwiseKind::Mul: {
        Node<Real>& nb = *self.inputs[1];
        auto av = na.value.data();
        auto bv = nb.value.data();
        for (std::size_t i = 0; i < n; ++i) tmp[i] = g[i] * bv[i];
        accumulate_grad<Real>(na, tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = g[i] * av[i];
        accumulate_grad<Real>(nb, tmp);
        break;
      }
      case ElementwiseKind::Abs: {
        auto av = na.value.data();
        for (std::size_t i = 0; i < n; ++i) {
          tmp[i] = av[i] > 0 ? g[i] : (av[i] < 0 ? -g[i] : Real(0));
        }
        accumulate_grad<Real>(na, tmp);
        break;
      }
      case ElementwiseKind::Relu: {
        auto av = na.value.data();
        for (std::size_t i = 0; i < n; ++i) tmp[i] = av[i] > 0 ? g[i] : Real(0);
        accumulate_grad<Real>(na, tmp);
        break;
      }
      case ElementwiseKind::Sigmoid: {
        auto yv = self.value.data();
        for (std::size_t i = 0; i < n; ++i) tmp[i] = g[i] * yv[i] * (Real(1) - yv[i]);
        accumulate_grad<Real>(na, tmp);
        break;
      }
    }
  });
}

template <class Real>
Var<Real> reduce(Tape<Real>& tape, ReduceKind kind, const Var<Real>& a,
                 std::optional<std::vector<std::size_t>> axes) {
  const Shape& in = a.shape();
  const std::size_t rank = in.size();
  std::vector<bool> reduced(rank, !axes.has_value());
  if (axes) {
    for (auto ax : *axes) {
      if (ax >= rank) {
        throw ShapeError("reduce: axis " + std::to_string(ax) + " invalid for shape " +
                         shape_string(in));
      }
      if (reduced[ax]) throw ShapeError("reduce: axis " + std::to_string(ax) + " repeated");
      reduced[ax] = true;
    }
  }

  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    if (reduced[d]) count *= in[d];
    else out_shape.push_back(in[d]);
  }

  // Map each input element to its output slot.
  const std::size_t n = a.value().size();
  std::vector<std::size_t> target(n);
  {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < rank; ++d) {
        if (!reduced[d]) o = o * in[d] + idx[d];
      }
      target[i] = o;
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < in[d]) break;
        idx[d] = 0;
      }
    }
  }

  Tensor<Real> out(out_shape);
  const auto x = a.value().data();
  for (std::size_t i = 0; i < n; ++i) out[target[i]] += x[i];
  const Real factor = kind == ReduceKind::Mean ? Real(1) / static_cast<Real>(count) : Real(1);
  if (kind == ReduceKind::Mean) {
    for (auto& v : out.data()) v *= factor;
  }

  return tape.record(std::move(out), {a},
                     [target = std::move(target), factor](Node<Real>& self) {
                       const auto g = self.grad.data();
                       std::vector<Real> gx(target.size());
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[target[i]] * factor;
                       accumulate_grad<Real>(*self.inputs[0], gx);
                     });
}

template <class Real>
Var<Real> scale(Tape<Real>& tape, const Var<Real>& a, Real c) {
  Tensor<Real> out(a.shape());
  const auto x = a.value().data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
  return tape.record(std::move(out), {a}, [c](Node<Real>& self) {
    const auto g = self.grad.data();
    std::vector<Real> gx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * c;
    accumulate_grad<Real>(*self.inputs[0], gx);
  });
}

template <class Real>
Var<Real> crop(Tape<Real>& tape, const Var<Real>& a, std::size_t i, std::size_t j,
               std::size_t h, std::size_t w) {
  require_rank(a.shape(), 3, "crop");
  const std::size_t C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
  if (h == 0 || w == 0 || i + h > H || j + w > W) {
    throw ShapeError("crop: window rows [" + std::to_string(i) + "," + std::to_string(i + h) +
                     ") cols [" + std::to_string(j) + "," + std::to_string(j + w) +
                     ") out of bounds for " + shape_string(a.shape()));
  }
  Tensor<Real> out({C, h, w});
  const auto& src = a.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = src.at(c, i + y, j + x);

  return tape.record(std::move(out), {a}, [i, j](Node<Real>& self) {
    Node<Real>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& gx = in.grad_buffer();
    const auto& g = self.grad;
    const std::size_t C = g.dim(0), h = g.dim(1), w = g.dim(2);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) gx.at(c, i + y, j + x) += g.at(c, y, x);
  });
}

template <class Real>
Var<Real> pad_zero(Tape<Real>& tape, const Var<Real>& a, std::size_t p) {
  require_rank(a.shape(), 3, "pad_zero");
  const std::size_t C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
  Tensor<Real> out({C, H + 2 * p, W + 2 * p});
  const auto& src = a.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(c, y + p, x + p) = src.at(c, y, x);

  return tape.record(std::move(out), {a}, [p](Node<Real>& self) {
    Node<Real>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& gx = in.grad_buffer();
    const std::size_t C = gx.dim(0), H = gx.dim(1), W = gx.dim(2);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) gx.at(c, y, x) += self.grad.at(c, y + p, x + p);
  });
}

template <class Real>
Var<Real> matvec(Tape<Real>& tape, const Var<Real>& W, const Var<Real>& x, const Var<Real>& bias) {
  require_rank(W.shape(), 2, "matvec weight");
  require_rank(x.shape(), 1, "matvec input");
  const std::size_t rows = W.shape()[0], cols = W.shape()[1];
  if (x.shape()[0] != cols) {
    throw ShapeError("matvec: weight " + shape_string(W.shape()) + " cannot multiply input " +
                     shape_string(x.shape()));
  }
  if (bias && bias.shape() != Shape{rows}) {
    throw ShapeError("matvec: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(rows) + " outputs");
  }
  Tensor<Real> out({rows});
  const Real* w = W.value().raw();
  const Real* xv = x.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    Real acc = bias ? bias.value()[r] : Real(0);
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * xv[c];
    out[r] = acc;
  }

  std::vector<Var<Real>> inputs{W, x};
  if (bias) inputs.push_back(bias);
  return tape.record(std::move(out), std::move(inputs), [rows, cols](Node<Real>& self) {
    const auto g = self.grad.data();
    Node<Real>& nw = *self.inputs[0];
    Node<Real>& nx = *self.inputs[1];
    if (nw.requires_grad) {
      auto gw = nw.grad_buffer().data();
      const auto xv = nx.value.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * xv[c];
    }
    if (nx.requires_grad) {
      auto gx = nx.grad_buffer().data();
      const auto wv = nw.value.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx[c] += g[r] * wv[r * cols + c];
    }
    if (self.inputs.size() > 2) accumulate_grad<Real>(*self.inputs[2], g);
  });
}

template <class Real>
Var<Real> conv2d(Tape<Real>& tape, const Var<Real>& x, const Var<Real>& weight,
                 const Var<Real>& bias, std::size_t stride, std::size_t pad) {
  require_rank(x.shape(), 3, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  kernels::ConvGeometry g;
  g.in_ch = x.shape()[0];
  g.in_h = x.shape()[1];
  g.in_w = x.shape()[2];
  g.out_ch = weight.shape()[0];
  g.k_h = weight.shape()[2];
  g.k_w = weight.shape()[3];
  g.stride = stride;
  g.pad = pad;
  if (weight.shape()[1] != g.in_ch) {
    throw ShapeError("conv2d: weight " + shape_string(weight.shape()) +
                     " expects a different channel count than input " + shape_string(x.shape()));
  }
  if (bias && bias.shape() != Shape{g.out_ch}) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match weight " +
                     shape_string(weight.shape()));
  }
  if (g.out_h() == 0 || g.out_w() == 0) {
    throw ShapeError("conv2d: kernel " + shape_string(weight.shape()) + " with stride " +
                     std::to_string(stride) + " and pad " + std::to_string(pad) +
                     " leaves no output for input " + shape_string(x.shape()));
  }

  std::vector<Real> col(g.patch_size() * g.out_pixels());
  kernels::im2col<Real>(g, x.value().data(), col);
  Tensor<Real> out({g.out_ch, g.out_h(), g.out_w()});
  std::span<const Real> b;
  if (bias) b = bias.value().data();
  kernels::conv2d_forward_parallel<Real>(g, col, weight.value().data(), b, out.data());

  std::vector<Var<Real>> inputs{x, weight};
  if (bias) inputs.push_back(bias);
  const bool keep = tape.recording() && (x.requires_grad() || weight.requires_grad() ||
                                         (bias && bias.requires_grad()));
  if (!keep) col = {};
  return tape.record(std::move(out), std::move(inputs),
                     [g, col = std::move(col)](Node<Real>& self) {
                       Node<Real>& nx = *self.inputs[0];
                       Node<Real>& nw = *self.inputs[1];
                       Node<Real>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
                       std::span<Real> gx, gw, gb;
                       if (nx.requires_grad) gx = nx.grad_buffer().data();
                       if (nw.requires_grad) gw = nw.grad_buffer().data();
                       if (nb && nb->requires_grad) gb = nb->grad_buffer().data();
                       kernels::conv2d_backward_parallel<Real>(g, col, nw.value.data(),
                                                               self.grad.data(), gx, gw, gb);
                     });
}

template <class Real>
Var<Real> reshape(Tape<Real>& tape, const Var<Real>& a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                     shape_string(shape));
  }
  return tape.record(a.value().reshaped(std::move(shape)), {a}, [](Node<Real>& self) {
    accumulate_grad<Real>(*self.inputs[0], self.grad.data());
  });
}

template <class Real>
Var<Real> stack(Tape<Real>& tape, std::span<const Var<Real>> parts) {
  if (parts.empty()) throw ShapeError("stack: no tensors given");
  const Shape& s = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != s) {
      throw ShapeError("stack: shape mismatch " + shape_string(s) + " vs " +
                       shape_string(p.shape()));
    }
  }
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor<Real> out(out_shape);
  const std::size_t n = shape_size(s);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.raw() + k * n);
  }
  return tape.record(std::move(out), std::vector<Var<Real>>(parts.begin(), parts.end()),
                     [n](Node<Real>& self) {
                       const auto g = self.grad.data();
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         accumulate_grad<Real>(*self.inputs[k], g.subspan(k * n, n));
                       }
                     });
}

template <class Real>
Var<Real> softmax(Tape<Real>& tape, const Var<Real>& logits) {
  require_rank(logits.shape(), 1, "softmax");
  const auto z = logits.value().data();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) {
      throw NumericError("softmax: non-finite logit at index " + std::to_string(i));
    }
  }
  const Real m = *std::max_element(z.begin(), z.end());
  Tensor<Real> out(logits.shape());
  Real total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) total += out[i] = std::exp(z[i] - m);
  for (auto& v : out.data()) v /= total;

  return tape.record(std::move(out), {logits}, [](Node<Real>& self) {
    const auto g = self.grad.data();
    const auto s = self.value.data();
    Real dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * s[i];
    std::vector<Real> gz(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gz[i] = s[i] * (g[i] - dot);
    accumulate_grad<Real>(*self.inputs[0], gz);
  });
}

template <class Real>
Var<Real> layer_norm(Tape<Real>& tape, const Var<Real>& x, const Var<Real>& gamma,
                     const Var<Real>& beta, Real eps) {
  require_rank(x.shape(), 3, "layer_norm");
  const std::size_t C = x.shape()[0], HW = x.shape()[1] * x.shape()[2];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw ShapeError("layer_norm: gain " + shape_string(gamma.shape()) + " and offset " +
                     shape_string(beta.shape()) + " do not match " + shape_string(x.shape()));
  }
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const auto xv = x.value().data();
  const Real n = static_cast<Real>(xv.size());
  Real mu = 0;
  for (auto v : xv) mu += v;
  mu /= n;
  Real var = 0;
  for (auto v : xv) var += (v - mu) * (v - mu);
  var /= n;
  const Real inv_sigma = Real(1) / std::sqrt(var + eps);

  Tensor<Real> xhat(x.shape()), out(x.shape());
  const auto g = gamma.value().data(), b = beta.value().data();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < HW; ++k) {
      const std::size_t i = c * HW + k;
      xhat[i] = (xv[i] - mu) * inv_sigma;
      out[i] = g[c] * xhat[i] + b[c];
    }
  return tape.record(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_sigma, C, HW](Node<Real>& self) {
                       const auto gy = self.grad.data();
                       const auto gam = self.inputs[1]->value.data();
                       const auto xh = xhat.data();
                       std::vector<Real> dgamma(C, 0), dbeta(C, 0), dx(gy.size());
                       Real mean_d = 0, mean_dx = 0;
                       for (std::size_t c = 0; c < C; ++c)
                         for (std::size_t k = 0; k < HW; ++k) {
                           const std::size_t i = c * HW + k;
                           dbeta[c] += gy[i];
                           dgamma[c] += gy[i] * xh[i];
                           const Real d = gy[i] * gam[c];
                           dx[i] = d;
                           mean_d += d;
                           mean_dx += d * xh[i];
                         }
                       const Real n = static_cast<Real>(gy.size());
                       mean_d /= n;
                       mean_dx /= n;
                       for (std::size_t i = 0; i < dx.size(); ++i) {
                         dx[i] = inv_sigma * (dx[i] - mean_d - xh[i] * mean_dx);
                       }
                       if (self.inputs[0]->requires_grad) accumulate_grad<Real>(*self.inputs[0], dx);
                       if (self.inputs[1]->requires_grad) accumulate_grad<Real>(*self.inputs[1], dgamma);
                       if (self.inputs[2]->requires_grad) accumulate_grad<Real>(*self.inputs[2], dbeta);
                     });
}

#define CCREID_INSTANTIATE_OPS(R)                                                              \
  template Var<R> elementwise<R>(Tape<R>&, ElementwiseKind, const Var<R>&, const Var<R>&);     \
  template Var<R> reduce<R>(Tape<R>&, ReduceKind, const Var<R>&,                               \
                            std::optional<std::vector<std::size_t>>);                          \
  template Var<R> scale<R>(Tape<R>&, const Var<R>&, R);                                        \
  template Var<R> crop<R>(Tape<R>&, const Var<R>&, std::size_t, std::size_t, std::size_t,      \
                          std::size_t);                                                        \
  template Var<R> pad_zero<R>(Tape<R>&, const Var<R>&, std::size_t);                           \
  template Var<R> matvec<R>(Tape<R>&, const Var<R>&, const Var<R>&, const Var<R>&);            \
  template Var<R> conv2d<R>(Tape<R>&, const Var<R>&, const Var<R>&, const Var<R>&,             \
                            std::size_t, std::size_t);                                         \
  template Var<R> reshape<R>(Tape<R>&, const Var<R>&, Shape);                                  \
  template Var<R> stack<R>(Tape<R>&, std::span<const Var<R>>);                                 \
  template Var<R> softmax<R>(Tape<R>&, const Var<R>&);                                        \
  template Var<R> layer_norm<R>(Tape<R>&, const Var<R>&, const Var<R>&, const Var<R>&, R);

CCREID_INSTANTIATE_OPS(float)
CCREID_INSTANTIATE_OPS(double)
CCREID_INSTANTIATE_OPS(long double)

#undef CCREID_INSTANTIATE_OPS

}  // namespace ccreid
