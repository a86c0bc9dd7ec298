#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccreid/nn.hpp"

namespace ccreid {

enum class Modality : std::uint8_t { RGB = 0, IR = 1 };

inline const char* to_string(Modality m) { return m == Modality::RGB ? "rgb" : "ir"; }

/// Topology of the two-path backbone. Stage s is two 3x3 conv + relu blocks;
/// the first conv of a downsampling stage has stride 2. Stages with index
/// >= shared_from_stage use one parameter set for both paths. With
/// layer_norm set, every conv output is standardized per image (see
/// ops layer_norm) before the relu.
struct BackboneConfig {
  std::vector<std::size_t> stage_channels{8, 16, 32, 64};
  std::vector<std::size_t> downsample_stages{1, 2, 3};
  std::size_t shared_from_stage = 2;
  std::size_t input_channels = 3;
  std::size_t input_h = 64;
  std::size_t input_w = 32;
  bool layer_norm = true;

  std::size_t stage_count() const noexcept { return stage_channels.size(); }
  bool downsamples(std::size_t stage) const;
  bool shared(std::size_t stage) const noexcept { return stage >= shared_from_stage; }

  /// (c_F, h_F, w_F). Throws ShapeError for invalid or degenerate configs.
  Shape feature_shape() const;
  void validate() const { (void)feature_shape(); }
};

template <class Real>
struct CommonFeature {
  Var<Real> map;  // (c_F, h_F, w_F)
  Modality modality = Modality::RGB;
};

template <class Real>
class DualPathBackbone {
 public:
  /// Registers all stage parameters in `store`, aliasing the shared stages.
  static DualPathBackbone build(const BackboneConfig& config, ParamStore<Real>& store);

  CommonFeature<Real> embed(Tape<Real>& tape, const Var<Real>& image, Modality modality) const;

  const BackboneConfig& config() const noexcept { return config_; }
  Shape feature_shape() const { return config_.feature_shape(); }

  /// Parameter name prefix of conv `k` in `stage` as seen by `modality`.
  static std::string layer_name(Modality modality, std::size_t stage, std::size_t k);
  static std::string shared_layer_name(std::size_t stage, std::size_t k);

 private:
  struct Block {
    Conv2dLayer<Real> conv;
    Var<Real> gain;  // null without layer_norm
    Var<Real> offset;
  };
  static Block bind_block(const ParamStore<Real>& store, const std::string& prefix,
                          std::size_t stride, bool norm);

  BackboneConfig config_;
  std::vector<Block> rgb_;
  std::vector<Block> ir_;
};

/// Global average pooling of the common map.
template <class Real>
Var<Real> global_feature(Tape<Real>& tape, const CommonFeature<Real>& f) {
  return global_avg_pool(tape, f.map);
}

}  // namespace ccreid
