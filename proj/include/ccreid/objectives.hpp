#pragma once

#include <span>
#include <vector>

#include "ccreid/dscsn.hpp"

namespace ccreid {

/// 0: same person, 1: different persons.
enum class PairLabel : std::uint8_t { Same = 0, Different = 1 };

inline constexpr double kDefaultLambda = 0.1;
inline constexpr double kDefaultLogClamp = 1e-12;

struct LossReport {
  double pbce = 0;
  double id = 0;
  double total = 0;
  double lambda = kDefaultLambda;
};

/// Mean binary cross-entropy of difference scores against pair labels:
/// -(1/M) sum[l log D + (1-l) log(1-D)], log arguments clamped below at `clamp`.
template <class Real>
Var<Real> pbce_loss(Tape<Real>& tape, std::span<const Var<Real>> scores,
                    std::span<const PairLabel> labels, Real clamp = Real(kDefaultLogClamp));

/// -log softmax(logits)[label] for one sample.
template <class Real>
Var<Real> softmax_cross_entropy(Tape<Real>& tape, const Var<Real>& logits, std::size_t label);

/// Identification loss over the global features of both modalities with one
/// shared classifier, averaged over all 2N samples.
template <class Real>
Var<Real> id_loss(Tape<Real>& tape, std::span<const Var<Real>> global_feats,
                  std::span<const Modality> modalities, std::span<const std::size_t> labels,
                  const AffineLayer<Real>& classifier);

/// pbce + lambda * id.
template <class Real>
Var<Real> total_loss(Tape<Real>& tape, const Var<Real>& pbce, const Var<Real>& id, Real lambda);

template <class Real>
LossReport make_loss_report(const Var<Real>& pbce, const Var<Real>& id, const Var<Real>& total,
                            double lambda) {
  return {static_cast<double>(pbce.value().item()), static_cast<double>(id.value().item()),
          static_cast<double>(total.value().item()), lambda};
}

}  // namespace ccreid
