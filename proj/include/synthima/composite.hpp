#pragma once

// Pixel-compositing generators: classical filters, two-layer blending,
// pencil-sketch pipeline, elementary cellular automata and formula patterns.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "synthima/error.hpp"
#include "synthima/image_io.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

// ---------------------------------------------------------------------------
// Filters

/// A classical (flipped) convolution kernel with an affine post-transform:
/// out = clamp(round(scale * (K * X) + bias)).
struct FilterKernel {
  std::string name;
  BasicTensor<double> coefficients;  // [kh, kw], both odd
  double scale = 1.0;
  double bias = 0.0;

  static FilterKernel identity() { return {"identity", BasicTensor<double>(Shape{1, 1}, 1.0), 1.0, 0.0}; }

  static FilterKernel box(std::size_t size) {
    if (size % 2 == 0) throw ArgumentError("box filter size must be odd");
    return {"box", BasicTensor<double>(Shape{size, size}, 1.0 / static_cast<double>(size * size)), 1.0, 0.0};
  }

  /// Normalized Gaussian with standard deviation `sigma`, truncated at
  /// 3 sigma. sigma == 0 degenerates to the identity.
  static FilterKernel gaussian(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ArgumentError("gaussian sigma must be finite and >= 0");
    if (sigma == 0.0) return {"gaussian", BasicTensor<double>(Shape{1, 1}, 1.0), 1.0, 0.0};
    const auto half = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    const std::size_t n = 2 * half + 1;
    BasicTensor<double> k(Shape{n, n});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double dy = static_cast<double>(i) - static_cast<double>(half);
        const double dx = static_cast<double>(j) - static_cast<double>(half);
        k(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        total += k(i, j);
      }
    }
    for (auto& v : k.data()) v /= total;
    return {"gaussian", std::move(k), 1.0, 0.0};
  }

  static FilterKernel sobel_x() {
    return {"sobel-x", BasicTensor<double>(Shape{3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1}), 1.0, 0.0};
  }
  static FilterKernel sobel_y() {
    return {"sobel-y", BasicTensor<double>(Shape{3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1}), 1.0, 0.0};
  }
  static FilterKernel sharpen() {
    return {"sharpen", BasicTensor<double>(Shape{3, 3}, {0, -1, 0, -1, 5, -1, 0, -1, 0}), 1.0, 0.0};
  }
  static FilterKernel emboss() {
    return {"emboss", BasicTensor<double>(Shape{3, 3}, {-2, -1, 0, -1, 1, 1, 0, 1, 2}), 1.0, 0.0};
  }
  /// 255 - x, as a 1x1 kernel.
  static FilterKernel invert() { return {"invert", BasicTensor<double>(Shape{1, 1}, 1.0), -1.0, 255.0}; }

  /// Named presets: identity, box3, box5, blur (sigma 1), sobel-x, sobel-y,
  /// sharpen, emboss, invert.
  static FilterKernel by_name(const std::string& name) {
    if (name == "identity") return identity();
    if (name == "box3") return box(3);
    if (name == "box5") return box(5);
    if (name == "blur") return gaussian(1.0);
    if (name == "sobel-x") return sobel_x();
    if (name == "sobel-y") return sobel_y();
    if (name == "sharpen") return sharpen();
    if (name == "emboss") return emboss();
    if (name == "invert") return invert();
    throw ArgumentError("unknown filter kernel '" + name + "'");
  }
};

/// Per-channel classical convolution (kernel flipped) with replicate-edge
/// padding, followed by scale, bias, rounding and clamping to [0, 255].
inline RgbImage apply_filter(const RgbImage& img, const FilterKernel& k) {
  require_rank(k.coefficients.shape(), 2, "apply_filter kernel");
  const std::size_t kh = k.coefficients.extent(0), kw = k.coefficients.extent(1);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ArgumentError("apply_filter: kernel extents must be odd, got " + k.coefficients.shape().str());
  }
  const auto rh = static_cast<std::ptrdiff_t>(kh / 2), rw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto H = static_cast<std::ptrdiff_t>(img.height), W = static_cast<std::ptrdiff_t>(img.width);
  RgbImage out(img.width, img.height);
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(kh); ++i) {
          const std::ptrdiff_t sy = std::clamp<std::ptrdiff_t>(y + rh - i, 0, H - 1);
          for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(kw); ++j) {
            const std::ptrdiff_t sx = std::clamp<std::ptrdiff_t>(x + rw - j, 0, W - 1);
            acc += k.coefficients(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                   img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), ch);
          }
        }
        const double v = std::clamp(std::round(k.scale * acc + k.bias), 0.0, 255.0);
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), ch) = static_cast<std::uint8_t>(v);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Blending

inline void require_same_extent(const RgbImage& a, const RgbImage& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(what) + ": image extents differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                     ")");
  }
}

/// alpha * a + (1 - alpha) * b per channel, rounded and clamped.
inline RgbImage blend(const RgbImage& a, const RgbImage& b, double alpha) {
  require_same_extent(a, b, "blend");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("blend: alpha must lie in [0, 1]");
  RgbImage out(a.width, a.height);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double v = alpha * a.pixels[i] + (1.0 - alpha) * b.pixels[i];
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  }
  return out;
}

/// Colour dodge of `base` by `layer`: base * 255 / (255 - layer), saturating
/// to 255 (including where layer == 255).
inline RgbImage color_dodge(const RgbImage& base, const RgbImage& layer) {
  require_same_extent(base, layer, "color_dodge");
  RgbImage out(base.width, base.height);
  for (std::size_t i = 0; i < base.pixels.size(); ++i) {
    const double l = layer.pixels[i];
    const double v = l >= 255.0 ? 255.0 : std::min(255.0, std::round(base.pixels[i] * 255.0 / (255.0 - l)));
    out.pixels[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

/// Rec. 601 luma, replicated into all three channels.
inline RgbImage to_grayscale(const RgbImage& img) {
  RgbImage out(img.width, img.height);
  for (std::size_t p = 0; p < img.width * img.height; ++p) {
    const double y = 0.299 * img.pixels[3 * p] + 0.587 * img.pixels[3 * p + 1] + 0.114 * img.pixels[3 * p + 2];
    const auto g = static_cast<std::uint8_t>(std::clamp(std::round(y), 0.0, 255.0));
    out.pixels[3 * p] = out.pixels[3 * p + 1] = out.pixels[3 * p + 2] = g;
  }
  return out;
}

/// grayscale -> invert -> Gaussian blur (sigma = blur_radius) -> dodge onto
/// the grayscale.
inline RgbImage pencil_sketch(const RgbImage& img, double blur_radius) {
  if (!(blur_radius >= 0.0)) throw ArgumentError("pencil_sketch: blur radius must be >= 0");
  const RgbImage gray = to_grayscale(img);
  const RgbImage inverted = apply_filter(gray, FilterKernel::invert());
  const RgbImage blurred = apply_filter(inverted, FilterKernel::gaussian(blur_radius));
  return color_dodge(gray, blurred);
}

// ---------------------------------------------------------------------------
// Elementary cellular automata

struct CaRule {
  int rule_number = 30;
  std::size_t width = 0;
  std::size_t steps = 0;            // rows in the output, seed included
  std::vector<std::uint8_t> seed;   // 0/1 cells; empty means a single centre cell

  /// New state for the neighbourhood (left, centre, right): bit
  /// (4*left + 2*centre + right) of the rule number.
  std::uint8_t next(std::uint8_t l, std::uint8_t c, std::uint8_t r) const {
    return static_cast<std::uint8_t>((rule_number >> (4 * l + 2 * c + r)) & 1);
  }
};

/// Row-major 0/1 grid.
struct BinaryGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  std::uint8_t at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }
  std::span<const std::uint8_t> row(std::size_t r) const { return {cells.data() + r * cols, cols}; }
};

inline std::vector<std::uint8_t> centre_seed(std::size_t width) {
  std::vector<std::uint8_t> s(width, 0);
  s[width / 2] = 1;
  return s;
}

/// Rows of an elementary automaton with wrap-around boundary.
inline BinaryGrid ca_generate(const CaRule& rule) {
  if (rule.rule_number < 0 || rule.rule_number > 255) throw ArgumentError("CA rule number must be in 0..255");
  if (rule.width < 3) throw ArgumentError("CA width must be >= 3");
  if (rule.steps == 0) throw ArgumentError("CA steps must be >= 1");
  std::vector<std::uint8_t> seed = rule.seed.empty() ? centre_seed(rule.width) : rule.seed;
  if (seed.size() != rule.width) throw ArgumentError("CA seed length must equal width");
  for (auto& c : seed) {
    if (c > 1) throw ArgumentError("CA seed cells must be 0 or 1");
  }

  const std::size_t W = rule.width;
  BinaryGrid grid{rule.steps, W, std::vector<std::uint8_t>(rule.steps * W)};
  std::copy(seed.begin(), seed.end(), grid.cells.begin());
  for (std::size_t t = 1; t < rule.steps; ++t) {
    const std::uint8_t* prev = &grid.cells[(t - 1) * W];
    std::uint8_t* cur = &grid.cells[t * W];
    for (std::size_t i = 0; i < W; ++i) cur[i] = rule.next(prev[(i + W - 1) % W], prev[i], prev[(i + 1) % W]);
  }
  return grid;
}

/// 0 -> white, 1 -> black, one cell per pixel.
inline RgbImage render_grid(const BinaryGrid& grid) {
  RgbImage img(grid.cols, grid.rows);
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const std::uint8_t v = grid.cells[i] ? 0 : 255;
    img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = v;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Formula patterns

using PatternParams = std::map<std::string, double>;

/// Scalar field in [0, 1] sampled at integer pixel coordinates.
using PatternField = std::function<double(double x, double y)>;
using PatternFactory = std::function<PatternField(std::size_t width, std::size_t height, const PatternParams&)>;

inline double param_or(const PatternParams& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

/// Cosine palette: channel k = 0.5 + 0.5 cos(2 pi (t + k/3)).
inline std::array<std::uint8_t, 3> cosine_palette(double t) {
  std::array<std::uint8_t, 3> rgb{};
  for (std::size_t k = 0; k < 3; ++k) {
    const double v = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (t + static_cast<double>(k) / 3.0));
    rgb[k] = static_cast<std::uint8_t>(std::clamp(std::round(255.0 * v), 0.0, 255.0));
  }
  return rgb;
}

inline const std::map<std::string, PatternFactory>& pattern_registry() {
  static const std::map<std::string, PatternFactory> registry = {
      // sin(a x) + sin(b y) + sin(c (x + y)), rescaled from [-3, 3].
      {"interference",
       [](std::size_t, std::size_t, const PatternParams& p) -> PatternField {
         const double a = param_or(p, "a", 0.15), b = param_or(p, "b", 0.15), c = param_or(p, "c", 0.07);
         return [=](double x, double y) {
           return (std::sin(a * x) + std::sin(b * y) + std::sin(c * (x + y)) + 3.0) / 6.0;
         };
       }},
      // Concentric rings sin(a * r) about the image centre.
      {"rings",
       [](std::size_t w, std::size_t h, const PatternParams& p) -> PatternField {
         const double a = param_or(p, "a", 0.3);
         const double cx = 0.5 * static_cast<double>(w - 1), cy = 0.5 * static_cast<double>(h - 1);
         return [=](double x, double y) { return 0.5 + 0.5 * std::sin(a * std::hypot(x - cx, y - cy)); };
       }},
      // Sum of `count` plane waves with seeded random directions and phases.
      {"waves",
       [](std::size_t, std::size_t, const PatternParams& p) -> PatternField {
         const auto count = static_cast<std::size_t>(std::max(1.0, param_or(p, "count", 5)));
         const double freq = param_or(p, "freq", 0.2);
         std::mt19937_64 rng(static_cast<std::uint64_t>(param_or(p, "seed", 0)));
         std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
         std::vector<std::array<double, 3>> waves(count);
         for (auto& wv : waves) {
           const double th = angle(rng);
           wv = {freq * std::cos(th), freq * std::sin(th), angle(rng)};
         }
         return [=](double x, double y) {
           double s = 0.0;
           for (const auto& wv : waves) s += std::sin(wv[0] * x + wv[1] * y + wv[2]);
           return 0.5 + 0.5 * s / static_cast<double>(waves.size());
         };
       }},
  };
  return registry;
}

inline RgbImage math_pattern(std::size_t width, std::size_t height, const std::string& formula_id,
                             const PatternParams& params) {
  if (width == 0 || height == 0) throw ArgumentError("math_pattern: extents must be positive");
  const auto& reg = pattern_registry();
  const auto it = reg.find(formula_id);
  if (it == reg.end()) throw ArgumentError("unknown pattern formula '" + formula_id + "'");
  const PatternField field = it->second(width, height, params);
  RgbImage img(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      img.set(x, y, cosine_palette(field(static_cast<double>(x), static_cast<double>(y))));
    }
  }
  return img;
}

}  // namespace synthima
