#include <gtest/gtest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "synthima/ops.hpp"

namespace synthima {
namespace {

using testing::DTensor;
using testing::random_float_tensor;
using testing::random_tensor;

// Direct evaluation of out[o,y,x] for one output element, used as the oracle.
double conv_at(const DTensor& in, const DTensor& k, const DTensor& bias, const ConvGeometry& g, std::size_t o,
               std::size_t y, std::size_t x) {
  double acc = bias[o];
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const long iy = static_cast<long>(y * g.stride + i) - static_cast<long>(g.padding);
        const long ix = static_cast<long>(x * g.stride + j) - static_cast<long>(g.padding);
        if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.extent(1)) || ix >= static_cast<long>(in.extent(2))) continue;
        acc += in(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) * k(o, c, i, j);
      }
    }
  }
  return acc;
}

TEST(Conv2dTest, ZeroInputGivesZeroOutput) {
  const ConvGeometry g{1, 1, 3, 3, 1, 0};
  const Tensor out = conv2d_forward(Tensor(Shape{1, 3, 3}), random_float_tensor(g.kernel_shape(), 1),
                                    Tensor(Shape{1}), g);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(out[0], 0.0f);
}

TEST(Conv2dTest, DeltaKernelIsIdentity) {
  const ConvGeometry g{1, 1, 3, 3, 1, 1};
  Tensor k(g.kernel_shape());
  k(0, 0, 1, 1) = 1.0f;
  const Tensor in = random_float_tensor(Shape{1, 5, 5}, 2);
  EXPECT_EQ(conv2d_forward(in, k, Tensor(Shape{1}), g), in);
}

TEST(Conv2dTest, AllOnesKernelCentreSumsNeighbourhood) {
  const ConvGeometry g{1, 1, 3, 3, 1, 1};
  const DTensor in(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const DTensor k(g.kernel_shape(), 1.0);
  const DTensor bias(Shape{1});
  const DTensor out = conv2d_forward(in, k, bias, g);
  const double expected = conv_at(in, k, bias, g, 0, 1, 1);
  EXPECT_EQ(expected, 45.0);
  EXPECT_EQ(out(0, 1, 1), expected);
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t x = 0; x < 3; ++x) EXPECT_DOUBLE_EQ(out(0, y, x), conv_at(in, k, bias, g, 0, y, x));
  }
}

TEST(Conv2dTest, MatchesDirectSummationAcrossGeometries) {
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 2u}) {
      const ConvGeometry g{2, 3, 3, 2, stride, pad};
      const DTensor in = random_tensor(Shape{2, 7, 6}, 10 + stride * 3 + pad);
      const DTensor k = random_tensor(g.kernel_shape(), 20 + stride * 3 + pad);
      const DTensor b = random_tensor(Shape{3}, 30);
      const DTensor out = conv2d_forward(in, k, b, g);
      for (std::size_t o = 0; o < 3; ++o) {
        for (std::size_t y = 0; y < out.extent(1); ++y) {
          for (std::size_t x = 0; x < out.extent(2); ++x) {
            EXPECT_NEAR(out(o, y, x), conv_at(in, k, b, g, o, y, x), 1e-12);
          }
        }
      }
    }
  }
}

TEST(Conv2dTest, ShapeMismatchIsReported) {
  const ConvGeometry g{2, 1, 3, 3, 1, 1};
  EXPECT_THROW(conv2d_forward(Tensor(Shape{3, 4, 4}), Tensor(g.kernel_shape()), Tensor(Shape{1}), g), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor(Shape{2, 4, 4}), Tensor(Shape{1, 2, 2, 2}), Tensor(Shape{1}), g), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor(Shape{2, 4, 4}), Tensor(g.kernel_shape()), Tensor(Shape{2}), g), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor(Shape{2, 1, 1}), Tensor(g.kernel_shape()), Tensor(Shape{1}),
                              ConvGeometry{2, 1, 3, 3, 1, 0}),
               ShapeError);
  EXPECT_THROW(conv2d_backward(Tensor(Shape{2, 4, 4}), Tensor(g.kernel_shape()), Tensor(Shape{1, 3, 3}), g),
               ShapeError);
}

// Output extents against a brute-force count of window placements.
TEST(ConvGeometryTest, OutputExtentMatchesEnumeration) {
  for (std::size_t k = 1; k <= 4; ++k) {
    for (std::size_t s : {1u, 2u}) {
      for (std::size_t p : {0u, 1u, 2u}) {
        for (std::size_t in = 1; in <= 9; ++in) {
          std::size_t count = 0;
          for (std::size_t y = 0; y * s + k <= in + 2 * p; ++y) ++count;
          if (count == 0) {
            EXPECT_THROW(ConvGeometry::output_extent(in, k, s, p), ShapeError);
            continue;
          }
          EXPECT_EQ(ConvGeometry::output_extent(in, k, s, p), count) << "k=" << k << " s=" << s << " p=" << p;
          const ConvGeometry g{1, 1, k, k, s, p};
          const Tensor out = conv2d_forward(Tensor(Shape{1, in, in}), Tensor(g.kernel_shape()), Tensor(Shape{1}), g);
          EXPECT_EQ(out.shape(), (Shape{1, count, count}));
        }
      }
    }
  }
}

TEST(Conv2dTest, LinearInInputForZeroBias) {
  const ConvGeometry g{3, 4, 3, 3, 1, 1};
  const Tensor k = random_float_tensor(g.kernel_shape(), 3);
  const Tensor zero_bias(Shape{4});
  const Tensor x = random_float_tensor(Shape{3, 8, 8}, 4);
  const Tensor y = random_float_tensor(Shape{3, 8, 8}, 5);
  const float a = 1.7f, b = -0.6f;
  const Tensor lhs = conv2d_forward(axpby(a, x, b, y), k, zero_bias, g);
  const Tensor rhs = axpby(a, conv2d_forward(x, k, zero_bias, g), b, conv2d_forward(y, k, zero_bias, g));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    num += (lhs[i] - rhs[i]) * static_cast<double>(lhs[i] - rhs[i]);
    den += static_cast<double>(rhs[i]) * rhs[i];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-5);
}

TEST(Conv2dTest, BackwardIsAdjointOfForward) {
  for (std::size_t stride : {1u, 2u}) {
    const ConvGeometry g{3, 5, 3, 3, stride, 1};
    const Tensor k = random_float_tensor(g.kernel_shape(), 6);
    const Tensor x = random_float_tensor(Shape{3, 8, 8}, 7);
    const Tensor fx = conv2d_forward(x, k, Tensor(Shape{5}), g);
    const Tensor gout = random_float_tensor(fx.shape(), 8);
    const double lhs = dot(fx, gout);
    const double rhs = dot(x, conv2d_backward(x, k, gout, g));
    EXPECT_LT(std::abs(lhs - rhs) / std::abs(lhs), 1e-4);
  }
}

TEST(Conv2dBackwardTest, ZeroCotangentGivesZeroGradient) {
  const ConvGeometry g{2, 3, 3, 3, 1, 1};
  const Tensor x = random_float_tensor(Shape{2, 4, 4}, 9);
  const Tensor gin = conv2d_backward(x, random_float_tensor(g.kernel_shape(), 10), Tensor(Shape{3, 4, 4}), g);
  for (float v : gin.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dBackwardTest, DeltaKernelPassesCotangentThrough) {
  const ConvGeometry g{1, 1, 3, 3, 1, 1};
  Tensor k(g.kernel_shape());
  k(0, 0, 1, 1) = 1.0f;
  const Tensor gout = random_float_tensor(Shape{1, 5, 5}, 11);
  EXPECT_EQ(conv2d_backward(Tensor(Shape{1, 5, 5}), k, gout, g), gout);
}

TEST(Conv2dBackwardTest, MatchesFiniteDifferences) {
  for (std::size_t stride : {1u, 2u}) {
    const ConvGeometry g{2, 3, 3, 3, stride, 1};
    const DTensor x = random_tensor(Shape{2, 4, 4}, 12);
    const DTensor k = random_tensor(g.kernel_shape(), 13);
    const DTensor b = random_tensor(Shape{3}, 14);
    const DTensor probe = random_tensor(Shape{3, g.output_height(4), g.output_width(4)}, 15);
    auto f = [&](const DTensor& in) { return dot(conv2d_forward(in, k, b, g), probe); };
    const auto rep = testing::check_gradient(f, x, conv2d_backward(x, k, probe, g), testing::all_indices(x.size()), 1e-3);
    EXPECT_EQ(rep.checked, x.size());
    EXPECT_LT(rep.max_rel_error, 1e-3);
  }
}

TEST(ReluTest, Definition) {
  const Tensor out = relu_forward(Tensor(Shape{3}, {-1.0f, 0.0f, 2.0f}));
  EXPECT_EQ(out, Tensor(Shape{3}, {0.0f, 0.0f, 2.0f}));
}

TEST(ReluTest, NanPropagates) {
  const Tensor out = relu_forward(Tensor(Shape{2}, {std::nanf(""), -1.0f}));
  EXPECT_TRUE(std::isnan(out[0]));
  EXPECT_EQ(out[1], 0.0f);
}

TEST(ReluTest, PositiveInputPassesThrough) {
  const Tensor x = random_float_tensor(Shape{2, 3, 3}, 16, 0.1f, 2.0f);
  const Tensor g = random_float_tensor(Shape{2, 3, 3}, 17);
  EXPECT_EQ(relu_forward(x), x);
  EXPECT_EQ(relu_backward(x, g), g);
}

TEST(ReluTest, BackwardMatchesFiniteDifferencesAwayFromKink) {
  const double h = 1e-3;
  DTensor x = random_tensor(Shape{4, 8, 8}, 18);
  for (auto& v : x.data()) {
    if (std::abs(v) < 4 * h) v += v < 0 ? -0.01 : 0.01;
  }
  const DTensor probe = random_tensor(x.shape(), 19);
  auto f = [&](const DTensor& in) { return dot(relu_forward(in), probe); };
  const auto rep = testing::check_gradient(f, x, relu_backward(x, probe), testing::all_indices(x.size()), h);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

TEST(MaxPoolTest, SingleWindow) {
  const auto res = maxpool2x2_forward(Tensor(Shape{1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(res.output, Tensor(Shape{1, 1, 1}, {4}));
  EXPECT_EQ(res.record.argmax, std::vector<std::size_t>{3});
}

TEST(MaxPoolTest, TiesGoToLowestFlatIndex) {
  const auto res = maxpool2x2_forward(Tensor(Shape{1, 4, 4}, 7.0f));
  EXPECT_EQ(res.output, Tensor(Shape{1, 2, 2}, 7.0f));
  EXPECT_EQ(res.record.argmax, (std::vector<std::size_t>{0, 2, 8, 10}));
  const Tensor gin = maxpool2x2_backward(res.record, Tensor(Shape{1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(gin, Tensor(Shape{1, 4, 4}, {1, 0, 2, 0, 0, 0, 0, 0, 3, 0, 4, 0, 0, 0, 0, 0}));
}

TEST(MaxPoolTest, OddExtentsRejectedUnlessAllowed) {
  EXPECT_THROW(maxpool2x2_forward(Tensor(Shape{1, 3, 4})), ShapeError);
  const auto res = maxpool2x2_forward(Tensor(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}), PoolOptions{true});
  EXPECT_EQ(res.output, Tensor(Shape{1, 2, 2}, {5, 6, 8, 9}));
}

TEST(MaxPoolTest, BackwardMatchesFiniteDifferencesAtUntiedPoints) {
  const double h = 1e-3;
  const DTensor x = random_tensor(Shape{2, 6, 6}, 20);
  const DTensor probe = random_tensor(Shape{2, 3, 3}, 21);
  auto f = [&](const DTensor& in) { return dot(maxpool2x2_forward(in).output, probe); };
  const auto res = maxpool2x2_forward(x);
  auto crosses_tie = [&](const DTensor& up, const DTensor& down) {
    return maxpool2x2_forward(up).record.argmax != maxpool2x2_forward(down).record.argmax;
  };
  const auto rep = testing::check_gradient(f, x, maxpool2x2_backward(res.record, probe),
                                           testing::all_indices(x.size()), h, crosses_tie);
  EXPECT_GT(rep.checked, 60u);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

}  // namespace
}  // namespace synthima
