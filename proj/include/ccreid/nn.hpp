#pragma once

#include <map>
#include <string>
#include <vector>

#include "ccreid/ops.hpp"

namespace ccreid {

/// Named trainable tensors. Aliases resolve to the same leaf node, so a
/// write through one name is visible through all of them and the optimizer
/// sees each shared tensor once.
template <class Real>
class ParamStore {
 public:
  /// Registers a canonical zero-initialised parameter.
  Var<Real> add(const std::string& name, Shape shape);
  /// Makes `alias` refer to the canonical entry `canonical`.
  void alias(const std::string& alias, const std::string& canonical);

  Var<Real> get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::string canonical_name(const std::string& name) const;

  const std::map<std::string, Var<Real>>& entries() const noexcept { return entries_; }
  const std::map<std::string, std::string>& aliases() const noexcept { return aliases_; }

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::map<std::string, Var<Real>> entries_;
  std::map<std::string, std::string> aliases_;
};

template <class Real>
struct Conv2dLayer {
  Var<Real> weight;  // (out_ch, in_ch, kh, kw)
  Var<Real> bias;    // (out_ch)
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Registers `<prefix>.weight` and `<prefix>.bias` in the store.
  static Conv2dLayer create(ParamStore<Real>& store, const std::string& prefix,
                            std::size_t in_ch, std::size_t out_ch, std::size_t k,
                            std::size_t stride, std::size_t padding);
  /// Binds to parameters already in the store (possibly through aliases).
  static Conv2dLayer bind(const ParamStore<Real>& store, const std::string& prefix,
                          std::size_t stride, std::size_t padding);

  Var<Real> forward(Tape<Real>& tape, const Var<Real>& x) const {
    return conv2d(tape, x, weight, bias, stride, padding);
  }
};

/// Fully connected layer y = W x + b.
template <class Real>
struct AffineLayer {
  Var<Real> weight;  // (out, in)
  Var<Real> bias;    // (out)

  static AffineLayer create(ParamStore<Real>& store, const std::string& prefix, std::size_t in,
                            std::size_t out);

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }

  Var<Real> forward(Tape<Real>& tape, const Var<Real>& x) const {
    return matvec(tape, weight, x, bias);
  }
};

/// Spatial mean of a (C,H,W) map.
template <class Real>
Var<Real> global_avg_pool(Tape<Real>& tape, const Var<Real>& x);

template <class Real>
struct SgdState {
  Real learning_rate = Real(0.1);
  Real momentum = Real(0.9);
  std::map<std::string, Tensor<Real>> velocity;  // keyed by canonical name
};

/// v <- momentum*v + grad; p <- p - lr*v, once per canonical parameter.
/// Throws std::invalid_argument naming any parameter without a gradient.
template <class Real>
void sgd_step(ParamStore<Real>& store, SgdState<Real>& state);

/// Xavier-uniform weights with bound sqrt(6/(fan_in+fan_out)), zero
/// biases and offsets, unit norm gains (names ending in ".gain"). Each entry draws from its own stream seeded by (seed, name).
template <class Real>
void init_params(ParamStore<Real>& store, std::uint64_t seed);

}  // namespace ccreid
