#include "ccreid/kernels.hpp"

#include <cstdint>

namespace ccreid::kernels {

namespace {

// Signed input coordinate for output position `o` and kernel tap `k`.
inline std::ptrdiff_t src_coord(std::size_t o, std::size_t k, const ConvGeometry& g) {
  return static_cast<std::ptrdiff_t>(o * g.stride + k) - static_cast<std::ptrdiff_t>(g.pad);
}

}  // namespace

template <class Real>
void conv2d_forward_serial(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                           std::span<const Real> bias, std::span<Real> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.in_h), W = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t o = 0; o < g.out_ch; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        Real acc = bias.empty() ? Real(0) : bias[o];
        for (std::size_t c = 0; c < g.in_ch; ++c) {
          for (std::size_t dy = 0; dy < g.k_h; ++dy) {
            const auto iy = src_coord(oy, dy, g);
            if (iy < 0 || iy >= H) continue;
            for (std::size_t dx = 0; dx < g.k_w; ++dx) {
              const auto ix = src_coord(ox, dx, g);
              if (ix < 0 || ix >= W) continue;
              acc += w[((o * g.in_ch + c) * g.k_h + dy) * g.k_w + dx] *
                     x[(c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                       static_cast<std::size_t>(ix)];
            }
          }
        }
        y[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

template <class Real>
void conv2d_backward_serial(const ConvGeometry& g, std::span<const Real> x,
                            std::span<const Real> w, std::span<const Real> gy,
                            std::span<Real> gx, std::span<Real> gw, std::span<Real> gb) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.in_h), W = static_cast<std::ptrdiff_t>(g.in_w);
  for (std::size_t o = 0; o < g.out_ch; ++o) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Real go = gy[(o * oh + oy) * ow + ox];
        if (!gb.empty()) gb[o] += go;
        for (std::size_t c = 0; c < g.in_ch; ++c) {
          for (std::size_t dy = 0; dy < g.k_h; ++dy) {
            const auto iy = src_coord(oy, dy, g);
            if (iy < 0 || iy >= H) continue;
            for (std::size_t dx = 0; dx < g.k_w; ++dx) {
              const auto ix = src_coord(ox, dx, g);
              if (ix < 0 || ix >= W) continue;
              const std::size_t wi = ((o * g.in_ch + c) * g.k_h + dy) * g.k_w + dx;
              const std::size_t xi = (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                                     static_cast<std::size_t>(ix);
              if (!gw.empty()) gw[wi] += go * x[xi];
              if (!gx.empty()) gx[xi] += go * w[wi];
            }
          }
        }
      }
    }
  }
}

template <class Real>
void im2col(const ConvGeometry& g, std::span<const Real> x, std::span<Real> col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), n = oh * ow;
  const auto H = static_cast<std::ptrdiff_t>(g.in_h), W = static_cast<std::ptrdiff_t>(g.in_w);
  const auto C = static_cast<std::int64_t>(g.in_ch);
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < C; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const Real* xc = x.data() + c * g.in_h * g.in_w;
    for (std::size_t dy = 0; dy < g.k_h; ++dy) {
      for (std::size_t dx = 0; dx < g.k_w; ++dx) {
        Real* row = col.data() + ((c * g.k_h + dy) * g.k_w + dx) * n;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = src_coord(oy, dy, g);
          Real* dst = row + oy * ow;
          if (iy < 0 || iy >= H) {
            for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] = Real(0);
            continue;
          }
          const Real* src = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = src_coord(ox, dx, g);
            dst[ox] = (ix < 0 || ix >= W) ? Real(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class Real>
void col2im_add(const ConvGeometry& g, std::span<const Real> col, std::span<Real> gx) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), n = oh * ow;
  const auto H = static_cast<std::ptrdiff_t>(g.in_h), W = static_cast<std::ptrdiff_t>(g.in_w);
  const auto C = static_cast<std::int64_t>(g.in_ch);
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < C; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    Real* gc = gx.data() + c * g.in_h * g.in_w;
    for (std::size_t dy = 0; dy < g.k_h; ++dy) {
      for (std::size_t dx = 0; dx < g.k_w; ++dx) {
        const Real* row = col.data() + ((c * g.k_h + dy) * g.k_w + dx) * n;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = src_coord(oy, dy, g);
          if (iy < 0 || iy >= H) continue;
          Real* dst = gc + static_cast<std::size_t>(iy) * g.in_w;
          const Real* src = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = src_coord(ox, dx, g);
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class Real>
void conv2d_forward_parallel(const ConvGeometry& g, std::span<const Real> col,
                             std::span<const Real> w, std::span<const Real> bias,
                             std::span<Real> y) {
  const std::size_t n = g.out_pixels(), K = g.patch_size();
  const auto O = static_cast<std::int64_t>(g.out_ch);
#pragma omp parallel for schedule(static)
  for (std::int64_t oi = 0; oi < O; ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    Real* yo = y.data() + o * n;
    const Real b = bias.empty() ? Real(0) : bias[o];
    for (std::size_t p = 0; p < n; ++p) yo[p] = b;
    const Real* wo = w.data() + o * K;
    for (std::size_t k = 0; k < K; ++k) {
      const Real wk = wo[k];
      const Real* ck = col.data() + k * n;
#pragma omp simd
      for (std::size_t p = 0; p < n; ++p) yo[p] += wk * ck[p];
    }
  }
}

template <class Real>
void conv2d_backward_parallel(const ConvGeometry& g, std::span<const Real> col,
                              std::span<const Real> w, std::span<const Real> gy,
                              std::span<Real> gx, std::span<Real> gw, std::span<Real> gb) {
  const std::size_t n = g.out_pixels(), K = g.patch_size(), O = g.out_ch;
  const auto Oi = static_cast<std::int64_t>(O);

  if (!gb.empty() || !gw.empty()) {
#pragma omp parallel for schedule(static)
    for (std::int64_t oi = 0; oi < Oi; ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      const Real* go = gy.data() + o * n;
      if (!gb.empty()) {
        Real s = 0;
#pragma omp simd reduction(+ : s)
        for (std::size_t p = 0; p < n; ++p) s += go[p];
        gb[o] += s;
      }
      if (!gw.empty()) {
        Real* gwo = gw.data() + o * K;
        for (std::size_t k = 0; k < K; ++k) {
          const Real* ck = col.data() + k * n;
          Real s = 0;
#pragma omp simd reduction(+ : s)
          for (std::size_t p = 0; p < n; ++p) s += go[p] * ck[p];
          gwo[k] += s;
        }
      }
    }
  }

  if (!gx.empty()) {
    std::vector<Real> gcol(K * n);
    const auto Ki = static_cast<std::int64_t>(K);
#pragma omp parallel for schedule(static)
    for (std::int64_t ki = 0; ki < Ki; ++ki) {
      const auto k = static_cast<std::size_t>(ki);
      Real* dst = gcol.data() + k * n;
      for (std::size_t o = 0; o < O; ++o) {
        const Real wk = w[o * K + k];
        const Real* go = gy.data() + o * n;
#pragma omp simd
        for (std::size_t p = 0; p < n; ++p) dst[p] += wk * go[p];
      }
    }
    col2im_add<Real>(g, gcol, gx);
  }
}

template <class Real>
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                    std::span<const Real> bias, std::span<Real> y) {
  std::vector<Real> col(g.patch_size() * g.out_pixels());
  im2col<Real>(g, x, col);
  conv2d_forward_parallel<Real>(g, col, w, bias, y);
}

#define CCREID_INSTANTIATE_KERNELS(R)                                                          \
  template void conv2d_forward_serial<R>(const ConvGeometry&, std::span<const R>,              \
                                         std::span<const R>, std::span<const R>, std::span<R>); \
  template void conv2d_backward_serial<R>(const ConvGeometry&, std::span<const R>,             \
                                          std::span<const R>, std::span<const R>,              \
                                          std::span<R>, std::span<R>, std::span<R>);           \
  template void im2col<R>(const ConvGeometry&, std::span<const R>, std::span<R>);              \
  template void col2im_add<R>(const ConvGeometry&, std::span<const R>, std::span<R>);          \
  template void conv2d_forward_parallel<R>(const ConvGeometry&, std::span<const R>,            \
                                           std::span<const R>, std::span<const R>,             \
                                           std::span<R>);                                      \
  template void conv2d_backward_parallel<R>(const ConvGeometry&, std::span<const R>,           \
                                            std::span<const R>, std::span<const R>,            \
                                            std::span<R>, std::span<R>, std::span<R>);         \
  template void conv2d_forward<R>(const ConvGeometry&, std::span<const R>, std::span<const R>, \
                                  std::span<const R>, std::span<R>);

CCREID_INSTANTIATE_KERNELS(float)
CCREID_INSTANTIATE_KERNELS(double)
CCREID_INSTANTIATE_KERNELS(long double)

#undef CCREID_INSTANTIATE_KERNELS

}  // namespace ccreid::kernels
