#include "ccreid/model.hpp"

namespace ccreid {

template <class Real>
CrossModalNet<Real>::CrossModalNet(const ModelConfig& config) : config_(config) {
  const Shape fs = config.backbone.feature_shape();
  config.sampling.validate(fs[1], fs[2]);
  if (config.num_classes == 0) throw std::invalid_argument("model needs at least one class");
  backbone_ = DualPathBackbone<Real>::build(config.backbone, store_);
  const auto volume = static_cast<Real>(fs[0] * config.sampling.h_k * config.sampling.w_k);
  head_ = DifferenceHead<Real>::create(store_, contrastive_feature_size(fs, config.sampling),
                                       Real(1) / volume);
  classifier_ = AffineLayer<Real>::create(store_, "id.classifier", fs[0], config.num_classes);
}

template class CrossModalNet<float>;
template class CrossModalNet<double>;
template class CrossModalNet<long double>;

}  // namespace ccreid
