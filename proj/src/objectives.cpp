#include "ccreid/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccreid {

template <class Real>
Var<Real> pbce_loss(Tape<Real>& tape, std::span<const Var<Real>> scores,
                    std::span<const PairLabel> labels, Real clamp) {
  if (scores.empty()) throw std::invalid_argument("pbce_loss: no pairs");
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("pbce_loss: " + std::to_string(scores.size()) + " scores but " +
                                std::to_string(labels.size()) + " labels");
  }
  std::vector<Var<Real>> flat;
  flat.reserve(scores.size());
  for (const auto& s : scores) flat.push_back(reshape(tape, s, Shape{}));
  auto d = stack<Real>(tape, flat);

  std::vector<Real> target(labels.size());
  for (std::size_t m = 0; m < labels.size(); ++m) {
    target[m] = labels[m] == PairLabel::Different ? Real(1) : Real(0);
  }
  const Real inv_m = Real(1) / static_cast<Real>(labels.size());
  const auto dv = d.value().data();
  Real acc = 0;
  for (std::size_t m = 0; m < dv.size(); ++m) {
    const Real l = target[m];
    acc += l * std::log(std::max(dv[m], clamp)) +
           (Real(1) - l) * std::log(std::max(Real(1) - dv[m], clamp));
  }

  return tape.record(Tensor<Real>::scalar(-acc * inv_m), {d},
                     [target = std::move(target), inv_m, clamp](Node<Real>& self) {
                       Node<Real>& nd = *self.inputs[0];
                       const Real g = self.grad[0];
                       const auto dv = nd.value.data();
                       std::vector<Real> gd(dv.size());
                       for (std::size_t m = 0; m < dv.size(); ++m) {
                         const Real l = target[m];
                         Real dl = 0;
                         if (dv[m] > clamp) dl += l / dv[m];
                         if (Real(1) - dv[m] > clamp) dl -= (Real(1) - l) / (Real(1) - dv[m]);
                         gd[m] = -g * inv_m * dl;
                       }
                       accumulate_grad<Real>(nd, gd);
                     });
}

template <class Real>
Var<Real> softmax_cross_entropy(Tape<Real>& tape, const Var<Real>& logits, std::size_t label) {
  if (logits.shape().size() != 1) {
    throw ShapeError("softmax_cross_entropy: logits must be rank 1, got " +
                     shape_string(logits.shape()));
  }
  const auto z = logits.value().data();
  if (label >= z.size()) {
    throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(z.size()) + " classes");
  }
  const Real m = *std::max_element(z.begin(), z.end());
  Real total = 0;
  for (auto v : z) total += std::exp(v - m);
  const Real lse = m + std::log(total);
  return tape.record(Tensor<Real>::scalar(lse - z[label]), {logits},
                     [label, lse](Node<Real>& self) {
                       Node<Real>& nz = *self.inputs[0];
                       const Real g = self.grad[0];
                       const auto z = nz.value.data();
                       std::vector<Real> gz(z.size());
                       for (std::size_t c = 0; c < z.size(); ++c) {
                         gz[c] = g * (std::exp(z[c] - lse) - (c == label ? Real(1) : Real(0)));
                       }
                       accumulate_grad<Real>(nz, gz);
                     });
}

template <class Real>
Var<Real> id_loss(Tape<Real>& tape, std::span<const Var<Real>> global_feats,
                  std::span<const Modality> modalities, std::span<const std::size_t> labels,
                  const AffineLayer<Real>& classifier) {
  if (global_feats.empty()) throw std::invalid_argument("id_loss: no samples");
  if (global_feats.size() != labels.size() || global_feats.size() != modalities.size()) {
    throw std::invalid_argument("id_loss: features, modalities and labels differ in length");
  }
  const auto rgb = std::count(modalities.begin(), modalities.end(), Modality::RGB);
  if (2 * static_cast<std::size_t>(rgb) != modalities.size()) {
    throw std::invalid_argument("id_loss: expected N samples per modality");
  }
  const std::size_t classes = classifier.out_features();
  std::vector<Var<Real>> terms;
  terms.reserve(global_feats.size());
  for (std::size_t s = 0; s < global_feats.size(); ++s) {
    if (labels[s] >= classes) {
      throw std::invalid_argument("id_loss: label " + std::to_string(labels[s]) +
                                  " out of range [0, " + std::to_string(classes) + ")");
    }
    terms.push_back(softmax_cross_entropy(tape, classifier.forward(tape, global_feats[s]), labels[s]));
  }
  return mean(tape, stack<Real>(tape, terms));
}

template <class Real>
Var<Real> total_loss(Tape<Real>& tape, const Var<Real>& pbce, const Var<Real>& id, Real lambda) {
  if (lambda < 0) throw std::invalid_argument("total_loss: lambda must be non-negative");
  return add(tape, pbce, scale(tape, id, lambda));
}

#define CCREID_INSTANTIATE_OBJECTIVES(R)                                                       \
  template Var<R> pbce_loss<R>(Tape<R>&, std::span<const Var<R>>, std::span<const PairLabel>,  \
                               R);                                                             \
  template Var<R> softmax_cross_entropy<R>(Tape<R>&, const Var<R>&, std::size_t);              \
  template Var<R> id_loss<R>(Tape<R>&, std::span<const Var<R>>, std::span<const Modality>,     \
                             std::span<const std::size_t>, const AffineLayer<R>&);             \
  template Var<R> total_loss<R>(Tape<R>&, const Var<R>&, const Var<R>&, R);

CCREID_INSTANTIATE_OBJECTIVES(float)
CCREID_INSTANTIATE_OBJECTIVES(double)
CCREID_INSTANTIATE_OBJECTIVES(long double)

#undef CCREID_INSTANTIATE_OBJECTIVES

}  // namespace ccreid
