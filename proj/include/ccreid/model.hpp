#pragma once

#include "ccreid/ccn.hpp"
#include "ccreid/objectives.hpp"

namespace ccreid {

struct ModelConfig {
  BackboneConfig backbone;
  SamplingConfig sampling;
  std::size_t num_classes = 32;  // training identities seen by the ID classifier
};

/// Backbone, difference head and ID classifier over one parameter store.
/// A model is bound to its SamplingConfig: the head width depends on it.
template <class Real>
class CrossModalNet {
 public:
  explicit CrossModalNet(const ModelConfig& config);

  CrossModalNet(const CrossModalNet&) = delete;
  CrossModalNet& operator=(const CrossModalNet&) = delete;

  void initialize(std::uint64_t seed) { init_params(store_, seed); }

  CommonFeature<Real> embed(Tape<Real>& tape, const Var<Real>& image, Modality m) const {
    return backbone_.embed(tape, image, m);
  }
  CommonFeature<Real> embed(Tape<Real>& tape, const Tensor<Real>& image, Modality m) const {
    return backbone_.embed(tape, constant(image), m);
  }

  PairScore<Real> score(Tape<Real>& tape, const CommonFeature<Real>& f_r,
                        const CommonFeature<Real>& f_i) const {
    return score_pair(tape, f_r, f_i, config_.sampling, head_);
  }

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore<Real>& params() noexcept { return store_; }
  const ParamStore<Real>& params() const noexcept { return store_; }
  const DualPathBackbone<Real>& backbone() const noexcept { return backbone_; }
  const DifferenceHead<Real>& head() const noexcept { return head_; }
  const AffineLayer<Real>& classifier() const noexcept { return classifier_; }

 private:
  ModelConfig config_;
  ParamStore<Real> store_;
  DualPathBackbone<Real> backbone_;
  DifferenceHead<Real> head_;
  AffineLayer<Real> classifier_;
};

}  // namespace ccreid
