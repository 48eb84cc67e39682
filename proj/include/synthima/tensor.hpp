#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "synthima/error.hpp"

namespace synthima {

/// Extents of a tensor, 1 to 4 axes, each at least 1.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;

  Shape(std::initializer_list<std::size_t> extents) { assign(extents.begin(), extents.end()); }

  explicit Shape(std::span<const std::size_t> extents) { assign(extents.begin(), extents.end()); }

  std::size_t rank() const { return rank_; }
  bool empty() const { return rank_ == 0; }

  std::size_t operator[](std::size_t axis) const { return extents_[axis]; }

  std::size_t size() const {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= extents_[i];
    return n;
  }

  std::span<const std::size_t> extents() const { return {extents_.data(), rank_}; }

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && std::equal(a.extents_.begin(), a.extents_.begin() + a.rank_, b.extents_.begin());
  }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << extents_[i];
    os << ']';
    return os.str();
  }

 private:
  template <class It>
  void assign(It first, It last) {
    const auto n = static_cast<std::size_t>(std::distance(first, last));
    if (n == 0 || n > kMaxRank) {
      throw ShapeError("tensor rank must be 1..4, got " + std::to_string(n));
    }
    rank_ = n;
    std::size_t i = 0;
    for (auto it = first; it != last; ++it, ++i) {
      if (*it == 0) throw ShapeError("tensor extents must be >= 1");
      extents_[i] = *it;
    }
  }

  std::array<std::size_t, kMaxRank> extents_{};
  std::size_t rank_ = 0;
};

/// Dense row-major tensor. `Real` is float for production use; the
/// gradient-check suites instantiate it with double.
///
/// A default-constructed tensor is empty (rank 0, no data) and only serves
/// as a placeholder; every operation rejects it.
template <class Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Real fill = Real(0)) : shape_(shape), data_(shape.size(), fill) {}

  BasicTensor(Shape shape, std::vector<Real> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  const std::vector<Real>& values() const { return data_; }

  Real& operator[](std::size_t flat) { return data_[flat]; }
  const Real& operator[](std::size_t flat) const { return data_[flat]; }

  // (c, h, w) addressing for 3-axis tensors.
  Real& operator()(std::size_t c, std::size_t h, std::size_t w) { return data_[(c * shape_[1] + h) * shape_[2] + w]; }
  const Real& operator()(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  // (r, c) addressing for 2-axis tensors.
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const Real& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  // (o, c, i, j) addressing for 4-axis tensors.
  Real& operator()(std::size_t o, std::size_t c, std::size_t i, std::size_t j) {
    return data_[((o * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }
  const Real& operator()(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[((o * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }

  /// Same data under new extents of equal total size.
  BasicTensor reshaped(Shape shape) const { return BasicTensor(shape, data_); }

  template <class Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

using Tensor = BasicTensor<float>;

inline void require_shape(const Shape& actual, const Shape& expected, const std::string& what) {
  if (!(actual == expected)) {
    throw ShapeError(what + ": expected shape " + expected.str() + ", got " + actual.str());
  }
}

inline void require_rank(const Shape& actual, std::size_t rank, const std::string& what) {
  if (actual.rank() != rank) {
    throw ShapeError(what + ": expected a rank-" + std::to_string(rank) + " tensor, got " + actual.str());
  }
}

/// Inner product accumulated in double.
template <class Real>
double dot(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_shape(b.shape(), a.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <class Real, class Fn>
BasicTensor<Real> map(const BasicTensor<Real>& t, Fn&& fn) {
  std::vector<Real> out(t.size());
  std::transform(t.data().begin(), t.data().end(), out.begin(), std::forward<Fn>(fn));
  return BasicTensor<Real>(t.shape(), std::move(out));
}

/// a*x + b*y elementwise.
template <class Real>
BasicTensor<Real> axpby(Real a, const BasicTensor<Real>& x, Real b, const BasicTensor<Real>& y) {
  require_shape(y.shape(), x.shape(), "axpby");
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return BasicTensor<Real>(x.shape(), std::move(out));
}

template <class Real>
void accumulate(BasicTensor<Real>& into, const BasicTensor<Real>& add) {
  require_shape(add.shape(), into.shape(), "accumulate");
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += add[i];
}

template <class Real>
bool all_finite(const BasicTensor<Real>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](Real v) { return std::isfinite(v); });
}

}  // namespace synthima
