#pragma once

// Differentiable primitives: 2-D convolution, rectification, 2x2 max pooling.
// Only gradients with respect to layer inputs are provided.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "synthima/parallel.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// Extent of the output along one axis:
  /// floor((input + 2*padding - kernel) / stride) + 1.
  static std::size_t output_extent(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ArgumentError("convolution stride must be positive");
    if (input + 2 * padding < kernel) {
      throw ShapeError("convolution window (" + std::to_string(kernel) + ") exceeds padded input extent (" +
                       std::to_string(input + 2 * padding) + ")");
    }
    return (input + 2 * padding - kernel) / stride + 1;
  }

  std::size_t output_height(std::size_t input_h) const { return output_extent(input_h, kernel_h, stride, padding); }
  std::size_t output_width(std::size_t input_w) const { return output_extent(input_w, kernel_w, stride, padding); }

  Shape kernel_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }

  /// 3x3, stride 1, "same" padding, as used throughout VGG16.
  static ConvGeometry same3x3(std::size_t in, std::size_t out) { return {in, out, 3, 3, 1, 1}; }
};

namespace detail {

template <class Real>
void check_conv_operands(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels, const ConvGeometry& geom,
                         const char* what) {
  require_rank(input.shape(), 3, what);
  require_shape(kernels.shape(), geom.kernel_shape(), std::string(what) + " kernels");
  if (input.extent(0) != geom.in_channels) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(input.extent(0)) +
                     " channels, geometry expects " + std::to_string(geom.in_channels));
  }
}

// Valid output index range [lo, hi) for kernel tap `tap` so that
// out*stride - padding + tap lands inside [0, input).
inline void tap_range(std::size_t tap, std::size_t input, std::size_t output, const ConvGeometry& g, std::size_t& lo,
                      std::size_t& hi) {
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  const auto offset = static_cast<std::ptrdiff_t>(tap) - static_cast<std::ptrdiff_t>(g.padding);
  // smallest y with y*s + offset >= 0
  std::ptrdiff_t first = offset >= 0 ? 0 : (-offset + s - 1) / s;
  // largest y with y*s + offset <= input-1
  const std::ptrdiff_t last_num = static_cast<std::ptrdiff_t>(input) - 1 - offset;
  std::ptrdiff_t last = last_num < 0 ? -1 : last_num / s;
  last = std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(output) - 1);
  lo = static_cast<std::size_t>(first);
  hi = last < first ? lo : static_cast<std::size_t>(last + 1);
}

// tap_range for every kernel row and column.
struct TapRanges {
  std::vector<std::size_t> y0, y1, x0, x1;

  TapRanges(const ConvGeometry& g, std::size_t H, std::size_t W, std::size_t OH, std::size_t OW)
      : y0(g.kernel_h), y1(g.kernel_h), x0(g.kernel_w), x1(g.kernel_w) {
    for (std::size_t i = 0; i < g.kernel_h; ++i) tap_range(i, H, OH, g, y0[i], y1[i]);
    for (std::size_t j = 0; j < g.kernel_w; ++j) tap_range(j, W, OW, g, x0[j], x1[j]);
  }
};

}  // namespace detail

/// Cross-correlation with zero padding:
/// out[o,y,x] = bias[o] + sum_{c,i,j} in[c, y*s-p+i, x*s-p+j] * k[o,c,i,j].
template <class Real>
BasicTensor<Real> conv2d_forward(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                                 const BasicTensor<Real>& bias, const ConvGeometry& geom) {
  detail::check_conv_operands(input, kernels, geom, "conv2d_forward");
  require_shape(bias.shape(), Shape{geom.out_channels}, "conv2d_forward bias");

  const std::size_t C = geom.in_channels, H = input.extent(1), W = input.extent(2);
  const std::size_t OH = geom.output_height(H), OW = geom.output_width(W);
  const std::size_t KH = geom.kernel_h, KW = geom.kernel_w, S = geom.stride, P = geom.padding;
  BasicTensor<Real> out(Shape{geom.out_channels, OH, OW});
  const detail::TapRanges taps(geom, H, W, OH, OW);

  parallel_for(geom.out_channels, [&](std::size_t o) {
    std::vector<double> acc(OH * OW, static_cast<double>(bias[o]));
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < KH; ++i) {
        const std::size_t y0 = taps.y0[i], y1 = taps.y1[i];
        for (std::size_t j = 0; j < KW; ++j) {
          const std::size_t x0 = taps.x0[j], x1 = taps.x1[j];
          const double k = kernels(o, c, i, j);
          if (k == 0.0) continue;
          for (std::size_t y = y0; y < y1; ++y) {
            const Real* row = &input(c, y * S + i - P, 0);
            double* dst = &acc[y * OW];
            for (std::size_t x = x0; x < x1; ++x) dst[x] += k * static_cast<double>(row[x * S + j - P]);
          }
        }
      }
    }
    for (std::size_t n = 0; n < OH * OW; ++n) out[o * OH * OW + n] = static_cast<Real>(acc[n]);
  });
  return out;
}

/// Gradient of sum(grad_out * conv2d_forward(input)) with respect to input.
/// Only the input's extents are needed.
template <class Real>
BasicTensor<Real> conv2d_backward(const Shape& input_shape, const BasicTensor<Real>& kernels,
                                  const BasicTensor<Real>& grad_out, const ConvGeometry& geom) {
  require_rank(input_shape, 3, "conv2d_backward");
  require_shape(kernels.shape(), geom.kernel_shape(), "conv2d_backward kernels");
  if (input_shape[0] != geom.in_channels) {
    throw ShapeError("conv2d_backward: input has " + std::to_string(input_shape[0]) + " channels, geometry expects " +
                     std::to_string(geom.in_channels));
  }
  const std::size_t C = geom.in_channels, H = input_shape[1], W = input_shape[2];
  const std::size_t OH = geom.output_height(H), OW = geom.output_width(W);
  require_shape(grad_out.shape(), Shape{geom.out_channels, OH, OW}, "conv2d_backward grad_out");
  const std::size_t KH = geom.kernel_h, KW = geom.kernel_w, S = geom.stride, P = geom.padding;

  BasicTensor<Real> grad_in(input_shape);
  const detail::TapRanges taps(geom, H, W, OH, OW);
  parallel_for(C, [&](std::size_t c) {
    std::vector<double> acc(H * W, 0.0);
    for (std::size_t o = 0; o < geom.out_channels; ++o) {
      for (std::size_t i = 0; i < KH; ++i) {
        const std::size_t y0 = taps.y0[i], y1 = taps.y1[i];
        for (std::size_t j = 0; j < KW; ++j) {
          const std::size_t x0 = taps.x0[j], x1 = taps.x1[j];
          const double k = kernels(o, c, i, j);
          if (k == 0.0) continue;
          for (std::size_t y = y0; y < y1; ++y) {
            const Real* g = &grad_out(o, y, 0);
            double* dst = &acc[(y * S + i - P) * W];
            for (std::size_t x = x0; x < x1; ++x) dst[x * S + j - P] += k * static_cast<double>(g[x]);
          }
        }
      }
    }
    for (std::size_t n = 0; n < H * W; ++n) grad_in[c * H * W + n] = static_cast<Real>(acc[n]);
  });
  return grad_in;
}

template <class Real>
BasicTensor<Real> conv2d_backward(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                                  const BasicTensor<Real>& grad_out, const ConvGeometry& geom) {
  return conv2d_backward(input.shape(), kernels, grad_out, geom);
}

template <class Real>
BasicTensor<Real> relu_forward(const BasicTensor<Real>& input) {
  return map(input, [](Real v) { return v <= Real(0) ? Real(0) : v; });  // NaN propagates
}

/// Passes grad_out where input > 0; zero elsewhere (including the kink).
template <class Real>
BasicTensor<Real> relu_backward(const BasicTensor<Real>& input, const BasicTensor<Real>& grad_out) {
  require_shape(grad_out.shape(), input.shape(), "relu_backward");
  BasicTensor<Real> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > Real(0) ? grad_out[i] : Real(0);
  return out;
}

/// Flat input index of the maximum of each pooling window, in output order.
struct PoolRecord {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;
};

template <class Real>
struct PoolResult {
  BasicTensor<Real> output;
  PoolRecord record;
};

struct PoolOptions {
  /// Odd extents are rejected unless set; when set the trailing partial
  /// window covers only the pixels that exist.
  bool allow_odd = false;
};

/// 2x2 non-overlapping max pooling; ties resolve to the lowest flat index.
template <class Real>
PoolResult<Real> maxpool2x2_forward(const BasicTensor<Real>& input, PoolOptions opts = {}) {
  require_rank(input.shape(), 3, "maxpool2x2_forward");
  const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
  if (!opts.allow_odd && (H % 2 != 0 || W % 2 != 0)) {
    throw ShapeError("maxpool2x2_forward: extents must be even, got " + input.shape().str());
  }
  const std::size_t OH = (H + 1) / 2, OW = (W + 1) / 2;
  PoolResult<Real> res{BasicTensor<Real>(Shape{C, OH, OW}), PoolRecord{input.shape(), Shape{C, OH, OW}, {}}};
  res.record.argmax.resize(C * OH * OW);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t x = 0; x < OW; ++x) {
        // Row-major window scan with strict '>' keeps the lowest flat index on ties.
        std::size_t best = (c * H + 2 * y) * W + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t iy = 2 * y + dy, ix = 2 * x + dx;
            if (iy >= H || ix >= W) continue;
            const std::size_t idx = (c * H + iy) * W + ix;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (c * OH + y) * OW + x;
        res.output[o] = input[best];
        res.record.argmax[o] = best;
      }
    }
  }
  return res;
}

template <class Real>
BasicTensor<Real> maxpool2x2_backward(const PoolRecord& record, const BasicTensor<Real>& grad_out) {
  require_shape(grad_out.shape(), record.output_shape, "maxpool2x2_backward grad_out");
  BasicTensor<Real> grad_in(record.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[record.argmax[o]] += grad_out[o];
  return grad_in;
}

}  // namespace synthima
