#include "ccreid/ccn.hpp"

namespace ccreid {

void SamplingConfig::validate(std::size_t h_f, std::size_t w_f) const {
  if (h_k == 0 || w_k == 0) throw ShapeError("kernel size must be positive");
  if (stride_v == 0 || stride_h == 0) throw ShapeError("kernel strides must be positive");
  if (h_k > h_f || w_k > w_f) {
    throw ShapeError("kernel " + std::to_string(h_k) + "x" + std::to_string(w_k) +
                     " larger than feature map " + std::to_string(h_f) + "x" +
                     std::to_string(w_f));
  }
}

namespace {

std::vector<std::size_t> plain_positions(std::size_t extent, std::size_t k, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + k <= extent; i += stride) out.push_back(i);
  return out;
}

// Stepping loop whose final step is clamped to extent - k and then stops.
std::vector<std::size_t> snapped_positions(std::size_t extent, std::size_t k, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0;; i += stride) {
    if (i + k >= extent) {
      out.push_back(extent - k);
      break;
    }
    out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<KernelOrigin> kernel_origins(std::size_t h_f, std::size_t w_f,
                                         const SamplingConfig& cfg) {
  cfg.validate(h_f, w_f);
  auto rows = cfg.edge_snap ? snapped_positions(h_f, cfg.h_k, cfg.stride_v)
                            : plain_positions(h_f, cfg.h_k, cfg.stride_v);
  auto cols = cfg.edge_snap ? snapped_positions(w_f, cfg.w_k, cfg.stride_h)
                            : plain_positions(w_f, cfg.w_k, cfg.stride_h);
  std::vector<KernelOrigin> out;
  out.reserve(rows.size() * cols.size());
  for (auto i : rows)
    for (auto j : cols) out.push_back({i, j});
  return out;
}

std::size_t kernel_count(std::size_t h_f, std::size_t w_f, const SamplingConfig& cfg) {
  return kernel_origins(h_f, w_f, cfg).size();
}

std::size_t contrastive_feature_size(const Shape& feature_shape, const SamplingConfig& cfg) {
  if (feature_shape.size() != 3) throw ShapeError("feature shape must be (C,H,W)");
  const std::size_t h_f = feature_shape[1], w_f = feature_shape[2];
  return kernel_count(h_f, w_f, cfg) * (h_f - cfg.h_k + 1) * (w_f - cfg.w_k + 1);
}

template <class Real>
KernelSet<Real> sample_kernels(Tape<Real>& tape, const CommonFeature<Real>& f,
                               const SamplingConfig& cfg) {
  const Shape& s = f.map.shape();
  if (s.size() != 3) throw ShapeError("sample_kernels: feature map must be (C,H,W)");
  KernelSet<Real> set;
  set.origins = kernel_origins(s[1], s[2], cfg);
  std::vector<Var<Real>> crops;
  crops.reserve(set.origins.size());
  for (const auto& o : set.origins) crops.push_back(crop(tape, f.map, o.row, o.col, cfg.h_k, cfg.w_k));
  set.kernels = stack<Real>(tape, crops);
  return set;
}

template <class Real>
KernelSet<Real> contrastive_kernels(Tape<Real>& tape, const KernelSet<Real>& kr,
                                    const KernelSet<Real>& ki) {
  if (kr.origins != ki.origins || kr.kernels.shape() != ki.kernels.shape()) {
    throw ShapeError("contrastive_kernels: kernel sets differ in count, shape or origins (" +
                     shape_string(kr.kernels.shape()) + " vs " +
                     shape_string(ki.kernels.shape()) + ")");
  }
  return {abs(tape, sub(tape, kr.kernels, ki.kernels)), kr.origins};
}

template <class Real>
ContrastiveFeature<Real> contrastive_correlate(Tape<Real>& tape, const KernelSet<Real>& kernels,
                                               const CommonFeature<Real>& f) {
  const Shape& ks = kernels.kernels.shape();
  const Shape& fs = f.map.shape();
  if (ks.size() != 4 || fs.size() != 3 || ks[1] != fs[0]) {
    throw ShapeError("contrastive_correlate: kernels " + shape_string(ks) +
                     " do not match feature channels of " + shape_string(fs));
  }
  return {conv2d(tape, f.map, kernels.kernels, Var<Real>(), 1, 0)};
}

template <class Real>
PairScore<Real> difference_scores(Tape<Real>& tape, const ContrastiveFeature<Real>& f_r_i,
                                  const ContrastiveFeature<Real>& f_i_r,
                                  const DifferenceHead<Real>& head) {
  const std::size_t n = head.input_dim();
  if (f_r_i.map.value().size() != n || f_i_r.map.value().size() != n) {
    throw ShapeError("difference_scores: contrastive features " +
                     shape_string(f_r_i.map.shape()) + " / " + shape_string(f_i_r.map.shape()) +
                     " do not flatten to head input size " + std::to_string(n));
  }
  auto direction = [&](const ContrastiveFeature<Real>& f) {
    auto flat = reshape(tape, f.map, Shape{n});
    if (head.input_scale != Real(1)) flat = scale(tape, flat, head.input_scale);
    return reshape(tape, sigmoid(tape, head.fc.forward(tape, flat)), Shape{});
  };
  PairScore<Real> s;
  s.d_r_given_i = direction(f_r_i);
  s.d_i_given_r = direction(f_i_r);
  s.d_pair = scale(tape, add(tape, s.d_r_given_i, s.d_i_given_r), Real(0.5));
  return s;
}

template <class Real>
PairScore<Real> score_sampled_pair(Tape<Real>& tape, const CommonFeature<Real>& f_r,
                                   const KernelSet<Real>& k_r, const CommonFeature<Real>& f_i,
                                   const KernelSet<Real>& k_i, const DifferenceHead<Real>& head) {
  const auto k_ri = contrastive_kernels(tape, k_r, k_i);
  const auto f_r_i = contrastive_correlate(tape, k_ri, f_r);
  const auto f_i_r = contrastive_correlate(tape, k_ri, f_i);
  return difference_scores(tape, f_r_i, f_i_r, head);
}

template <class Real>
PairScore<Real> score_pair(Tape<Real>& tape, const CommonFeature<Real>& f_r,
                           const CommonFeature<Real>& f_i, const SamplingConfig& cfg,
                           const DifferenceHead<Real>& head) {
  if (f_r.map.shape() != f_i.map.shape()) {
    throw ShapeError("score_pair: feature shapes differ " + shape_string(f_r.map.shape()) +
                     " vs " + shape_string(f_i.map.shape()));
  }
  const auto k_r = sample_kernels(tape, f_r, cfg);
  const auto k_i = sample_kernels(tape, f_i, cfg);
  return score_sampled_pair(tape, f_r, k_r, f_i, k_i, head);
}

#define CCREID_INSTANTIATE_CCN(R)                                                              \
  template KernelSet<R> sample_kernels<R>(Tape<R>&, const CommonFeature<R>&,                   \
                                          const SamplingConfig&);                              \
  template KernelSet<R> contrastive_kernels<R>(Tape<R>&, const KernelSet<R>&,                  \
                                               const KernelSet<R>&);                           \
  template ContrastiveFeature<R> contrastive_correlate<R>(Tape<R>&, const KernelSet<R>&,       \
                                                         const CommonFeature<R>&);             \
  template PairScore<R> difference_scores<R>(Tape<R>&, const ContrastiveFeature<R>&,           \
                                             const ContrastiveFeature<R>&,                     \
                                             const DifferenceHead<R>&);                        \
  template PairScore<R> score_sampled_pair<R>(Tape<R>&, const CommonFeature<R>&,               \
                                              const KernelSet<R>&, const CommonFeature<R>&,    \
                                              const KernelSet<R>&, const DifferenceHead<R>&);  \
  template PairScore<R> score_pair<R>(Tape<R>&, const CommonFeature<R>&,                       \
                                      const CommonFeature<R>&, const SamplingConfig&,          \
                                      const DifferenceHead<R>&);

CCREID_INSTANTIATE_CCN(float)
CCREID_INSTANTIATE_CCN(double)
CCREID_INSTANTIATE_CCN(long double)

#undef CCREID_INSTANTIATE_CCN

}  // namespace ccreid
