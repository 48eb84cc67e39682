#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "synthima/composite.hpp"

namespace synthima {
namespace {

RgbImage random_image(std::size_t w, std::size_t h, unsigned seed, int lo = 0, int hi = 255) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> dist(lo, hi);
  RgbImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(dist(rng));
  return img;
}

// Left half `left`, right half `right`; the step sits between columns
// edge-1 and edge.
RgbImage step_image(std::size_t w, std::size_t h, std::size_t edge, std::uint8_t left, std::uint8_t right) {
  RgbImage img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::uint8_t v = x < edge ? left : right;
      img.set(x, y, {v, v, v});
    }
  }
  return img;
}

// Textbook per-pixel classical convolution with replicated borders.
double convolve_at(const RgbImage& img, const BasicTensor<double>& k, long x, long y, std::size_t ch) {
  const long kh = static_cast<long>(k.extent(0)), kw = static_cast<long>(k.extent(1));
  double acc = 0.0;
  for (long i = 0; i < kh; ++i) {
    for (long j = 0; j < kw; ++j) {
      const long sy = std::clamp(y - (i - kh / 2), 0L, static_cast<long>(img.height) - 1);
      const long sx = std::clamp(x - (j - kw / 2), 0L, static_cast<long>(img.width) - 1);
      acc += k(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
             img.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), ch);
    }
  }
  return acc;
}

TEST(FilterTest, IdentityKernelIsExact) {
  const RgbImage img = random_image(9, 7, 1);
  EXPECT_EQ(apply_filter(img, FilterKernel::identity()), img);
  FilterKernel centre{"delta3", BasicTensor<double>(Shape{3, 3}), 1.0, 0.0};
  centre.coefficients(1, 1) = 1.0;
  EXPECT_EQ(apply_filter(img, centre), img);
}

TEST(FilterTest, BoxFilterPreservesConstant) {
  const RgbImage img(6, 5, 77);
  EXPECT_EQ(apply_filter(img, FilterKernel::box(3)), img);
  EXPECT_EQ(apply_filter(img, FilterKernel::gaussian(1.5)), img);
}

TEST(FilterTest, EvenKernelRejected) {
  const FilterKernel k{"even", BasicTensor<double>(Shape{2, 3}, 1.0), 1.0, 0.0};
  EXPECT_THROW(apply_filter(RgbImage(4, 4), k), ArgumentError);
}

TEST(FilterTest, SobelRespondsOnlyAtTheStep) {
  const std::size_t W = 12, H = 6, edge = 6;
  const RgbImage img = step_image(W, H, edge, 200, 40);
  FilterKernel k = FilterKernel::sobel_x();
  k.scale = 1.0 / 8.0;
  const RgbImage out = apply_filter(img, k);

  double best = -1.0;
  for (std::size_t x = 0; x < W; ++x) {
    const double expect = std::clamp(std::round(k.scale * convolve_at(img, k.coefficients, static_cast<long>(x), 2, 0)), 0.0, 255.0);
    for (std::size_t y = 0; y < H; ++y) EXPECT_EQ(out.at(x, y, 0), expect) << "x=" << x;
    best = std::max(best, expect);
  }
  EXPECT_EQ(best, 80.0);
  for (std::size_t x = 0; x < W; ++x) {
    const bool at_edge = x == edge - 1 || x == edge;
    EXPECT_EQ(out.at(x, 0, 1), at_edge ? 80 : 0) << "x=" << x;
  }
}

TEST(FilterTest, LinearBeforeClamping) {
  // Values in [60, 120] keep every blurred value inside [0, 255]; the only
  // discrepancy left is rounding in blend and in each filter pass.
  const RgbImage a = random_image(8, 8, 2, 60, 120);
  const RgbImage b = random_image(8, 8, 3, 60, 120);
  const FilterKernel k = FilterKernel::box(3);
  const RgbImage lhs = apply_filter(blend(a, b, 0.5), k);
  const RgbImage fa = apply_filter(a, k), fb = apply_filter(b, k);
  for (std::size_t i = 0; i < lhs.pixels.size(); ++i) {
    EXPECT_LE(std::abs(2.0 * lhs.pixels[i] - (fa.pixels[i] + fb.pixels[i])), 3.0);
  }
  for (long y = 0; y < 8; ++y) {
    for (long x = 0; x < 8; ++x) {
      EXPECT_EQ(fa.at(x, y, 1), std::round(convolve_at(a, k.coefficients, x, y, 1)));
    }
  }
}

TEST(BlendTest, BoundaryWeightsAreExact) {
  const RgbImage a = random_image(5, 4, 4), b = random_image(5, 4, 5);
  EXPECT_EQ(blend(a, b, 1.0), a);
  EXPECT_EQ(blend(a, b, 0.0), b);
}

TEST(BlendTest, HalfwayAverage) {
  EXPECT_EQ(blend(RgbImage(1, 1, 100), RgbImage(1, 1, 200), 0.5), RgbImage(1, 1, 150));
}

TEST(BlendTest, SelfBlendIsIdentity) {
  const RgbImage a = random_image(6, 6, 6);
  for (double alpha : {0.0, 0.1, 0.33, 0.5, 0.77, 1.0}) EXPECT_EQ(blend(a, a, alpha), a);
}

TEST(BlendTest, Errors) {
  EXPECT_THROW(blend(RgbImage(2, 2), RgbImage(2, 3), 0.5), ShapeError);
  EXPECT_THROW(blend(RgbImage(2, 2), RgbImage(2, 2), 1.5), ArgumentError);
  EXPECT_THROW(blend(RgbImage(2, 2), RgbImage(2, 2), -0.1), ArgumentError);
}

TEST(PencilSketchTest, FlatInputIsWhite) {
  const RgbImage out = pencil_sketch(RgbImage(8, 8, 90), 2.0);
  for (auto p : out.pixels) EXPECT_EQ(p, 255);
}

TEST(PencilSketchTest, ZeroRadiusSaturates) {
  const RgbImage out = pencil_sketch(random_image(8, 8, 7), 0.0);
  for (auto p : out.pixels) EXPECT_EQ(p, 255);
}

TEST(PencilSketchTest, NegativeRadiusRejected) { EXPECT_THROW(pencil_sketch(RgbImage(2, 2), -1.0), ArgumentError); }

TEST(PencilSketchTest, StrokesStayInTheEdgeBand) {
  const std::size_t W = 40, H = 4, edge = 20;
  const RgbImage img = step_image(W, H, edge, 220, 60);
  for (double radius : {1.0, 2.0, 3.0}) {
    const RgbImage out = pencil_sketch(img, radius);

    // Reference pipeline, one stage at a time.
    const BasicTensor<double> g = FilterKernel::gaussian(radius).coefficients;
    RgbImage inverted(W, H);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) inverted.pixels[i] = static_cast<std::uint8_t>(255 - img.pixels[i]);
    const auto band = static_cast<long>(std::ceil(3.0 * radius));
    for (std::size_t x = 0; x < W; ++x) {
      const double blurred = std::round(convolve_at(inverted, g, static_cast<long>(x), 1, 0));
      const double base = img.at(x, 1, 0);
      const double expect = blurred >= 255.0 ? 255.0 : std::min(255.0, std::round(base * 255.0 / (255.0 - blurred)));
      EXPECT_EQ(out.at(x, 1, 0), expect) << "radius " << radius << " x " << x;
      const long dist = x < edge ? static_cast<long>(edge) - 1 - static_cast<long>(x) : static_cast<long>(x - edge);
      if (dist >= band) {
        EXPECT_EQ(out.at(x, 1, 0), 255) << "stroke outside band at x=" << x;
      }
    }
    // The dark side of the edge carries a stroke.
    EXPECT_LT(out.at(edge, 1, 0), 255);
  }
}

// Next-row oracle read straight off the rule number's binary expansion.
std::vector<std::uint8_t> oracle_step(int rule, const std::vector<std::uint8_t>& row) {
  const std::size_t W = row.size();
  std::vector<std::uint8_t> out(W);
  for (std::size_t i = 0; i < W; ++i) {
    const int pattern = row[(i + W - 1) % W] * 4 + row[i] * 2 + row[(i + 1) % W];
    out[i] = static_cast<std::uint8_t>((rule >> pattern) & 1);
  }
  return out;
}

TEST(CellularAutomatonTest, Rule30FromSingleCell) {
  const BinaryGrid g = ca_generate(CaRule{30, 7, 2, {}});
  const std::vector<std::uint8_t> row1(g.row(1).begin(), g.row(1).end());
  EXPECT_EQ(row1, (std::vector<std::uint8_t>{0, 0, 1, 1, 1, 0, 0}));
}

TEST(CellularAutomatonTest, Rule90IsXorOfNeighbours) {
  std::mt19937 rng(8);
  std::vector<std::uint8_t> seed(33);
  for (auto& c : seed) c = rng() & 1u;
  const BinaryGrid g = ca_generate(CaRule{90, 33, 40, seed});
  for (std::size_t t = 0; t + 1 < g.rows; ++t) {
    for (std::size_t i = 0; i < g.cols; ++i) {
      EXPECT_EQ(g.at(t + 1, i), g.at(t, (i + 32) % 33) ^ g.at(t, (i + 1) % 33));
    }
  }
}

TEST(CellularAutomatonTest, Rule0ClearsEverythingAfterSeed) {
  const BinaryGrid g = ca_generate(CaRule{0, 9, 5, std::vector<std::uint8_t>(9, 1)});
  for (std::size_t t = 1; t < 5; ++t) {
    for (auto c : g.row(t)) EXPECT_EQ(c, 0);
  }
}

TEST(CellularAutomatonTest, MatchesRuleTableForEveryRule) {
  std::mt19937 rng(9);
  for (int rule = 0; rule < 256; ++rule) {
    std::vector<std::uint8_t> row(16);
    for (auto& c : row) c = rng() & 1u;
    const BinaryGrid g = ca_generate(CaRule{rule, 16, 6, row});
    for (std::size_t t = 1; t < 6; ++t) {
      row = oracle_step(rule, row);
      EXPECT_TRUE(std::equal(row.begin(), row.end(), g.row(t).begin())) << "rule " << rule << " row " << t;
    }
  }
}

TEST(CellularAutomatonTest, RenderingIsBlackOnWhite) {
  const RgbImage img = render_grid(ca_generate(CaRule{30, 5, 1, {}}));
  EXPECT_EQ(img, RgbImage(5, 1, {255, 255, 255, 255, 255, 255, 0, 0, 0, 255, 255, 255, 255, 255, 255}));
}

TEST(CellularAutomatonTest, InvalidRules) {
  EXPECT_THROW(ca_generate(CaRule{256, 8, 2, {}}), ArgumentError);
  EXPECT_THROW(ca_generate(CaRule{30, 2, 2, {}}), ArgumentError);
  EXPECT_THROW(ca_generate(CaRule{30, 8, 2, std::vector<std::uint8_t>(7)}), ArgumentError);
}

TEST(PatternTest, ZeroFrequenciesGiveConstantImage) {
  const RgbImage img = math_pattern(12, 9, "interference", {{"a", 0}, {"b", 0}, {"c", 0}});
  for (std::size_t p = 1; p < 12 * 9; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(img.pixels[3 * p + ch], img.pixels[ch]);
  }
}

TEST(PatternTest, Deterministic) {
  for (const char* id : {"interference", "rings", "waves"}) {
    EXPECT_EQ(math_pattern(20, 16, id, {{"seed", 4}}), math_pattern(20, 16, id, {{"seed", 4}})) << id;
  }
  EXPECT_NE(math_pattern(20, 16, "waves", {{"seed", 4}}), math_pattern(20, 16, "waves", {{"seed", 5}}));
}

TEST(PatternTest, EqualFrequenciesAreTransposeSymmetric) {
  const std::size_t n = 24;
  const RgbImage img = math_pattern(n, n, "interference", {{"a", 0.21}, {"b", 0.21}, {"c", 0.05}});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      // Direct evaluation of the field at (x, y) and (y, x).
      const double v = (std::sin(0.21 * x) + std::sin(0.21 * y) + std::sin(0.05 * (x + y)) + 3.0) / 6.0;
      EXPECT_EQ(img.at(x, y, 0), cosine_palette(v)[0]);
      for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(img.at(x, y, ch), img.at(y, x, ch));
    }
  }
}

TEST(PatternTest, UnknownFormula) { EXPECT_THROW(math_pattern(4, 4, "mandelbrot?", {}), ArgumentError); }

}  // namespace
}  // namespace synthima
