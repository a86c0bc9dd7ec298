#pragma once

#include <vector>

#include "ccreid/dscsn.hpp"

namespace ccreid {

/// Kernel window and strides for sampling personalised kernels.
struct SamplingConfig {
  std::size_t h_k = 3;
  std::size_t w_k = 3;
  std::size_t stride_v = 1;
  std::size_t stride_h = 1;
  /// When set, the last row/column of windows snaps to the map edge.
  bool edge_snap = false;

  /// Throws ShapeError unless the window fits a (h_f, w_f) map.
  void validate(std::size_t h_f, std::size_t w_f) const;
};

struct KernelOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const KernelOrigin&, const KernelOrigin&) = default;
};

/// Crop origins in sampling order. Without edge_snap this is the plain double
/// loop (i from 0 while i+h_k <= h_f, step stride_v; j likewise).
std::vector<KernelOrigin> kernel_origins(std::size_t h_f, std::size_t w_f,
                                         const SamplingConfig& cfg);

/// (floor((h_f-h_k)/stride_v)+1) * (floor((w_f-w_k)/stride_h)+1)
std::size_t kernel_count(std::size_t h_f, std::size_t w_f, const SamplingConfig& cfg);

/// Input width of the difference head: n_K * (h_f-h_k+1) * (w_f-w_k+1).
std::size_t contrastive_feature_size(const Shape& feature_shape, const SamplingConfig& cfg);

/// Ordered kernels stacked as (n_K, c_F, h_k, w_k).
template <class Real>
struct KernelSet {
  Var<Real> kernels;
  std::vector<KernelOrigin> origins;

  std::size_t size() const noexcept { return origins.size(); }
};

/// One channel per contrastive kernel, valid correlation extent.
template <class Real>
struct ContrastiveFeature {
  Var<Real> map;  // (n_K, h_f-h_k+1, w_f-w_k+1)
};

template <class Real>
struct PairScore {
  Var<Real> d_r_given_i;
  Var<Real> d_i_given_r;
  Var<Real> d_pair;  // mean of the two directional scores
};

/// Sigmoid-headed fully connected layer shared by both score directions.
template <class Real>
struct DifferenceHead {
  AffineLayer<Real> fc;
  /// Multiplies the flattened contrastive feature before the affine map.
  Real input_scale = 1;

  static DifferenceHead create(ParamStore<Real>& store, std::size_t input_dim,
                               Real input_scale = 1) {
    return {AffineLayer<Real>::create(store, "ccn.head", input_dim, 1), input_scale};
  }
  std::size_t input_dim() const { return fc.in_features(); }
};

template <class Real>
KernelSet<Real> sample_kernels(Tape<Real>& tape, const CommonFeature<Real>& f,
                               const SamplingConfig& cfg);

/// Elementwise |kr - ki| per kernel.
template <class Real>
KernelSet<Real> contrastive_kernels(Tape<Real>& tape, const KernelSet<Real>& kr,
                                    const KernelSet<Real>& ki);

template <class Real>
ContrastiveFeature<Real> contrastive_correlate(Tape<Real>& tape, const KernelSet<Real>& kernels,
                                               const CommonFeature<Real>& f);

template <class Real>
PairScore<Real> difference_scores(Tape<Real>& tape, const ContrastiveFeature<Real>& f_r_i,
                                  const ContrastiveFeature<Real>& f_i_r,
                                  const DifferenceHead<Real>& head);

/// Full pair pipeline from already sampled kernel sets.
template <class Real>
PairScore<Real> score_sampled_pair(Tape<Real>& tape, const CommonFeature<Real>& f_r,
                                   const KernelSet<Real>& k_r, const CommonFeature<Real>& f_i,
                                   const KernelSet<Real>& k_i, const DifferenceHead<Real>& head);

/// sample -> contrast -> correlate -> score.
template <class Real>
PairScore<Real> score_pair(Tape<Real>& tape, const CommonFeature<Real>& f_r,
                           const CommonFeature<Real>& f_i, const SamplingConfig& cfg,
                           const DifferenceHead<Real>& head);

}  // namespace ccreid
