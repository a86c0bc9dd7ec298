#include "ccreid/dscsn.hpp"

#include <algorithm>
#include <set>

namespace ccreid {

bool BackboneConfig::downsamples(std::size_t stage) const {
  return std::find(downsample_stages.begin(), downsample_stages.end(), stage) !=
         downsample_stages.end();
}

Shape BackboneConfig::feature_shape() const {
  if (stage_channels.empty()) throw ShapeError("backbone needs at least one stage");
  if (shared_from_stage > stage_count()) {
    throw ShapeError("shared_from_stage " + std::to_string(shared_from_stage) + " exceeds " +
                     std::to_string(stage_count()) + " stages");
  }
  std::set<std::size_t> seen;
  for (auto s : downsample_stages) {
    if (s >= stage_count() || !seen.insert(s).second) {
      throw ShapeError("invalid downsample stage index " + std::to_string(s));
    }
  }
  if (input_channels == 0 || input_h == 0 || input_w == 0) {
    throw ShapeError("input shape must be positive");
  }
  std::size_t h = input_h, w = input_w;
  for (std::size_t s = 0; s < stage_count(); ++s) {
    if (stage_channels[s] == 0) throw ShapeError("stage " + std::to_string(s) + " has zero channels");
    if (downsamples(s)) {
      h = (h + 2 - 3) / 2 + 1;
      w = (w + 2 - 3) / 2 + 1;
    }
  }
  return {stage_channels.back(), h, w};
}

template <class Real>
std::string DualPathBackbone<Real>::layer_name(Modality modality, std::size_t stage,
                                               std::size_t k) {
  return std::string(to_string(modality)) + ".stage" + std::to_string(stage) + ".conv" +
         std::to_string(k);
}

template <class Real>
std::string DualPathBackbone<Real>::shared_layer_name(std::size_t stage, std::size_t k) {
  return "shared.stage" + std::to_string(stage) + ".conv" + std::to_string(k);
}

template <class Real>
typename DualPathBackbone<Real>::Block DualPathBackbone<Real>::bind_block(
    const ParamStore<Real>& store, const std::string& prefix, std::size_t stride, bool norm) {
  Block b{Conv2dLayer<Real>::bind(store, prefix, stride, 1), {}, {}};
  if (norm) {
    b.gain = store.get(prefix + ".norm.gain");
    b.offset = store.get(prefix + ".norm.offset");
  }
  return b;
}

template <class Real>
DualPathBackbone<Real> DualPathBackbone<Real>::build(const BackboneConfig& config,
                                                     ParamStore<Real>& store) {
  config.validate();
  DualPathBackbone net;
  net.config_ = config;
  std::size_t in_ch = config.input_channels;
  for (std::size_t s = 0; s < config.stage_count(); ++s) {
    const std::size_t out_ch = config.stage_channels[s];
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t cin = k == 0 ? in_ch : out_ch;
      const std::size_t stride = (k == 0 && config.downsamples(s)) ? 2 : 1;
      auto create = [&](const std::string& prefix) {
        Conv2dLayer<Real>::create(store, prefix, cin, out_ch, 3, stride, 1);
        if (config.layer_norm) {
          store.add(prefix + ".norm.gain", {out_ch});
          store.add(prefix + ".norm.offset", {out_ch});
        }
      };
      if (config.shared(s)) {
        const auto canonical = shared_layer_name(s, k);
        create(canonical);
        std::vector<std::string> suffixes{".weight", ".bias"};
        if (config.layer_norm) {
          suffixes.push_back(".norm.gain");
          suffixes.push_back(".norm.offset");
        }
        for (auto m : {Modality::RGB, Modality::IR}) {
          for (const auto& suffix : suffixes) {
            store.alias(layer_name(m, s, k) + suffix, canonical + suffix);
          }
        }
      } else {
        for (auto m : {Modality::RGB, Modality::IR}) create(layer_name(m, s, k));
      }
      net.rgb_.push_back(bind_block(store, layer_name(Modality::RGB, s, k), stride, config.layer_norm));
      net.ir_.push_back(bind_block(store, layer_name(Modality::IR, s, k), stride, config.layer_norm));
    }
    in_ch = out_ch;
  }
  return net;
}

template <class Real>
CommonFeature<Real> DualPathBackbone<Real>::embed(Tape<Real>& tape, const Var<Real>& image,
                                                  Modality modality) const {
  const Shape expected{config_.input_channels, config_.input_h, config_.input_w};
  if (image.shape() != expected) {
    throw ShapeError("embed: image shape " + shape_string(image.shape()) + ", expected " +
                     shape_string(expected));
  }
  const auto& layers = modality == Modality::RGB ? rgb_ : ir_;
  Var<Real> x = image;
  for (const auto& b : layers) {
    x = b.conv.forward(tape, x);
    if (b.gain) x = layer_norm(tape, x, b.gain, b.offset, Real(1e-5));
    x = relu(tape, x);
  }
  return {x, modality};
}

template class DualPathBackbone<float>;
template class DualPathBackbone<double>;
template class DualPathBackbone<long double>;

}  // namespace ccreid
