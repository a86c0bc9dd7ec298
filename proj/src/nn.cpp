#include "ccreid/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "ccreid/rng.hpp"

namespace ccreid {

template <class Real>
Var<Real> ParamStore<Real>::add(const std::string& name, Shape shape) {
  if (entries_.count(name) || aliases_.count(name)) {
    throw std::invalid_argument("parameter '" + name + "' already registered");
  }
  auto v = Var<Real>::leaf(Tensor<Real>(std::move(shape)), true);
  entries_.emplace(name, v);
  return v;
}

template <class Real>
void ParamStore<Real>::alias(const std::string& alias, const std::string& canonical) {
  if (entries_.count(alias) || aliases_.count(alias)) {
    throw std::invalid_argument("alias '" + alias + "' already registered");
  }
  if (!entries_.count(canonical)) {
    throw std::invalid_argument("alias '" + alias + "' targets unknown parameter '" + canonical +
                                "'");
  }
  aliases_.emplace(alias, canonical);
}

template <class Real>
std::string ParamStore<Real>::canonical_name(const std::string& name) const {
  auto it = aliases_.find(name);
  return it == aliases_.end() ? name : it->second;
}

template <class Real>
Var<Real> ParamStore<Real>::get(const std::string& name) const {
  auto it = entries_.find(canonical_name(name));
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class Real>
bool ParamStore<Real>::contains(const std::string& name) const {
  return entries_.count(canonical_name(name)) > 0;
}

template <class Real>
std::size_t ParamStore<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

template <class Real>
void ParamStore<Real>::zero_grad() {
  for (auto& [name, v] : entries_) {
    auto copy = v;
    copy.zero_grad();
  }
}

template <class Real>
Conv2dLayer<Real> Conv2dLayer<Real>::create(ParamStore<Real>& store, const std::string& prefix,
                                            std::size_t in_ch, std::size_t out_ch, std::size_t k,
                                            std::size_t stride, std::size_t padding) {
  Conv2dLayer layer;
  layer.weight = store.add(prefix + ".weight", {out_ch, in_ch, k, k});
  layer.bias = store.add(prefix + ".bias", {out_ch});
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

template <class Real>
Conv2dLayer<Real> Conv2dLayer<Real>::bind(const ParamStore<Real>& store,
                                          const std::string& prefix, std::size_t stride,
                                          std::size_t padding) {
  Conv2dLayer layer;
  layer.weight = store.get(prefix + ".weight");
  layer.bias = store.get(prefix + ".bias");
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

template <class Real>
AffineLayer<Real> AffineLayer<Real>::create(ParamStore<Real>& store, const std::string& prefix,
                                            std::size_t in, std::size_t out) {
  AffineLayer layer;
  layer.weight = store.add(prefix + ".weight", {out, in});
  layer.bias = store.add(prefix + ".bias", {out});
  return layer;
}

template <class Real>
Var<Real> global_avg_pool(Tape<Real>& tape, const Var<Real>& x) {
  if (x.shape().size() != 3) {
    throw ShapeError("global_avg_pool: expected (C,H,W), got " + shape_string(x.shape()));
  }
  return reduce(tape, ReduceKind::Mean, x, std::vector<std::size_t>{1, 2});
}

template <class Real>
void sgd_step(ParamStore<Real>& store, SgdState<Real>& state) {
  for (const auto& [name, p] : store.entries()) {
    if (!p.has_grad()) throw std::invalid_argument("sgd_step: parameter '" + name + "' has no gradient");
  }
  for (const auto& [name, p] : store.entries()) {
    auto [it, fresh] = state.velocity.try_emplace(name, p.shape());
    auto& v = it->second;
    if (v.shape() != p.shape()) {
      throw ShapeError("sgd_step: velocity for '" + name + "' has shape " +
                       shape_string(v.shape()) + ", parameter has " + shape_string(p.shape()));
    }
    auto param = p;
    auto w = param.mutable_value().data();
    const auto g = p.grad().data();
    auto vel = v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      vel[i] = state.momentum * vel[i] + g[i];
      w[i] -= state.learning_rate * vel[i];
    }
  }
}

template <class Real>
void init_params(ParamStore<Real>& store, std::uint64_t seed) {
  for (const auto& [name, p] : store.entries()) {
    auto param = p;
    auto values = param.mutable_value().data();
    const Shape& s = p.shape();
    if (name.ends_with(".gain")) {
      std::fill(values.begin(), values.end(), Real(1));
      continue;
    }
    const bool is_bias = s.size() < 2 || name.ends_with(".bias");
    if (is_bias) {
      std::fill(values.begin(), values.end(), Real(0));
      continue;
    }
    std::size_t receptive = 1;
    for (std::size_t d = 2; d < s.size(); ++d) receptive *= s[d];
    const double fan_in = static_cast<double>(s[1] * receptive);
    const double fan_out = static_cast<double>(s[0] * receptive);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    SplitMix64 rng(mix_seed(seed, hash_name(name)));
    for (auto& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  }
}

#define CCREID_INSTANTIATE_NN(R)                                         \
  template class ParamStore<R>;                                          \
  template struct Conv2dLayer<R>;                                        \
  template struct AffineLayer<R>;                                        \
  template Var<R> global_avg_pool<R>(Tape<R>&, const Var<R>&);           \
  template void sgd_step<R>(ParamStore<R>&, SgdState<R>&);               \
  template void init_params<R>(ParamStore<R>&, std::uint64_t);

CCREID_INSTANTIATE_NN(float)
CCREID_INSTANTIATE_NN(double)
CCREID_INSTANTIATE_NN(long double)

#undef CCREID_INSTANTIATE_NN

}  // namespace ccreid
