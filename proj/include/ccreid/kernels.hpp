#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ccreid::kernels {

/// Geometry of a 2-D cross-correlation over a (C,H,W) input with
/// (O,C,kh,kw) weights, symmetric zero padding and equal strides.
struct ConvGeometry {
  std::size_t in_ch = 0, in_h = 0, in_w = 0;
  std::size_t out_ch = 0, k_h = 0, k_w = 0;
  std::size_t stride = 1, pad = 0;

  /// 0 when the window does not fit.
  std::size_t out_h() const noexcept {
    return in_h + 2 * pad < k_h ? 0 : (in_h + 2 * pad - k_h) / stride + 1;
  }
  std::size_t out_w() const noexcept {
    return in_w + 2 * pad < k_w ? 0 : (in_w + 2 * pad - k_w) / stride + 1;
  }
  std::size_t patch_size() const noexcept { return in_ch * k_h * k_w; }
  std::size_t out_pixels() const noexcept { return out_h() * out_w(); }
  std::size_t input_size() const noexcept { return in_ch * in_h * in_w; }
  std::size_t weight_size() const noexcept { return out_ch * patch_size(); }
  std::size_t output_size() const noexcept { return out_ch * out_pixels(); }
};

// Serial reference kernels: direct nested loops, no buffers. Kept as the
// ground truth for the parallel versions and for benchmarking.

template <class Real>
void conv2d_forward_serial(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                           std::span<const Real> bias, std::span<Real> y);

/// Accumulates into gx, gw, gb; any of them may be empty to skip it.
template <class Real>
void conv2d_backward_serial(const ConvGeometry& g, std::span<const Real> x,
                            std::span<const Real> w, std::span<const Real> gy,
                            std::span<Real> gx, std::span<Real> gw, std::span<Real> gb);

// Parallel kernels: im2col followed by OpenMP-parallel row updates.
// Every output element is reduced by exactly one thread in a fixed order, so
// results do not depend on the thread count.

/// Fills col (patch_size x out_pixels) from x.
template <class Real>
void im2col(const ConvGeometry& g, std::span<const Real> x, std::span<Real> col);

/// Scatter-adds col back into gx.
template <class Real>
void col2im_add(const ConvGeometry& g, std::span<const Real> col, std::span<Real> gx);

/// y = w * col + bias. `col` must come from im2col for the same geometry.
template <class Real>
void conv2d_forward_parallel(const ConvGeometry& g, std::span<const Real> col,
                             std::span<const Real> w, std::span<const Real> bias,
                             std::span<Real> y);

template <class Real>
void conv2d_backward_parallel(const ConvGeometry& g, std::span<const Real> col,
                              std::span<const Real> w, std::span<const Real> gy,
                              std::span<Real> gx, std::span<Real> gw, std::span<Real> gb);

/// Convenience wrapper: allocates the column buffer and runs the parallel path.
template <class Real>
void conv2d_forward(const ConvGeometry& g, std::span<const Real> x, std::span<const Real> w,
                    std::span<const Real> bias, std::span<Real> y);

}  // namespace ccreid::kernels
