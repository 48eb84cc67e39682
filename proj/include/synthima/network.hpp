#pragma once

// VGG-shaped feature network: layer descriptions, weight storage, forward
// passes with activation capture, and reverse passes to the input image.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "synthima/error.hpp"
#include "synthima/ops.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

enum class LayerKind { kConvRelu, kMaxPool };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConvRelu;
  ConvGeometry geom;  // conv layers only
};

class NetworkSpec {
 public:
  NetworkSpec() = default;

  NetworkSpec(std::vector<LayerSpec> layers, std::size_t input_channels = 3)
      : layers_(std::move(layers)), input_channels_(input_channels) {
    validate();
  }

  /// VGG-style stack: block b holds convs_per_block[b] 3x3 conv+relu layers
  /// named conv{b+1}_{i+1} of width widths[b], followed by pool{b+1}.
  static NetworkSpec vgg_like(const std::vector<std::size_t>& convs_per_block, const std::vector<std::size_t>& widths,
                              std::size_t input_channels = 3) {
    if (convs_per_block.size() != widths.size() || widths.empty()) {
      throw ArgumentError("vgg_like: block counts and widths must be non-empty and of equal length");
    }
    std::vector<LayerSpec> layers;
    std::size_t channels = input_channels;
    for (std::size_t b = 0; b < widths.size(); ++b) {
      for (std::size_t i = 0; i < convs_per_block[b]; ++i) {
        layers.push_back({"conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1), LayerKind::kConvRelu,
                          ConvGeometry::same3x3(channels, widths[b])});
        channels = widths[b];
      }
      layers.push_back({"pool" + std::to_string(b + 1), LayerKind::kMaxPool, {}});
    }
    return NetworkSpec(std::move(layers), input_channels);
  }

  /// The 13 convolutional layers of VGG16 with their five pooling stages.
  static NetworkSpec vgg16() { return vgg_like({2, 2, 3, 3, 3}, {64, 128, 256, 512, 512}); }

  /// Small random-weight stand-in used when no weight file is supplied:
  /// three blocks of one conv each (widths 16, 32, 64).
  static NetworkSpec toy() { return vgg_like({1, 1, 1}, {16, 32, 64}); }

  static NetworkSpec by_name(const std::string& name) {
    if (name == "vgg16") return vgg16();
    if (name == "toy") return toy();
    throw ArgumentError("unknown network preset '" + name + "' (expected vgg16 or toy)");
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t input_channels() const { return input_channels_; }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t index_of(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw ArgumentError("unknown layer '" + name + "'");
  }

  /// Number of pooling layers among layers [0, through].
  std::size_t pools_through(std::size_t through) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i <= through && i < layers_.size(); ++i) n += layers_[i].kind == LayerKind::kMaxPool;
    return n;
  }

  std::vector<std::string> conv_layer_names() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) {
      if (l.kind == LayerKind::kConvRelu) out.push_back(l.name);
    }
    return out;
  }

  std::set<std::string> all_layer_names() const {
    std::set<std::string> out;
    for (const auto& l : layers_) out.insert(l.name);
    return out;
  }

 private:
  void validate() const {
    std::set<std::string> seen;
    std::size_t channels = input_channels_;
    for (const auto& l : layers_) {
      if (l.name.empty()) throw ArgumentError("layer names must be non-empty");
      if (!seen.insert(l.name).second) throw ArgumentError("duplicate layer name '" + l.name + "'");
      if (l.kind == LayerKind::kConvRelu) {
        if (l.geom.in_channels != channels) {
          throw ShapeError("layer " + l.name + " expects " + std::to_string(l.geom.in_channels) +
                           " input channels but receives " + std::to_string(channels));
        }
        if (l.geom.stride == 0 || l.geom.kernel_h == 0 || l.geom.kernel_w == 0 || l.geom.out_channels == 0) {
          throw ArgumentError("layer " + l.name + " has a degenerate geometry");
        }
        channels = l.geom.out_channels;
      }
    }
  }

  std::vector<LayerSpec> layers_;
  std::size_t input_channels_ = 3;
};

template <class Real>
struct ConvParams {
  BasicTensor<Real> kernels;  // [out, in, kh, kw]
  BasicTensor<Real> bias;     // [out]
};

/// Conv parameters keyed by layer name.
template <class Real>
class BasicWeightStore {
 public:
  void set(const std::string& layer, ConvParams<Real> params) { entries_[layer] = std::move(params); }

  bool contains(const std::string& layer) const { return entries_.count(layer) != 0; }

  const ConvParams<Real>& at(const std::string& layer) const {
    const auto it = entries_.find(layer);
    if (it == entries_.end()) throw ArgumentError("no weights for layer '" + layer + "'");
    return it->second;
  }

  const std::map<std::string, ConvParams<Real>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.kernels.size() + p.bias.size();
    return n;
  }

  template <class Other>
  BasicWeightStore<Other> cast() const {
    BasicWeightStore<Other> out;
    for (const auto& [name, p] : entries_) out.set(name, {p.kernels.template cast<Other>(), p.bias.template cast<Other>()});
    return out;
  }

  friend bool operator==(const BasicWeightStore& a, const BasicWeightStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (const auto& [name, p] : a.entries_) {
      const auto it = b.entries_.find(name);
      if (it == b.entries_.end() || !(it->second.kernels == p.kernels) || !(it->second.bias == p.bias)) return false;
    }
    return true;
  }

 private:
  std::map<std::string, ConvParams<Real>> entries_;
};

using WeightStore = BasicWeightStore<float>;

/// Checks that every conv layer of `spec` has exactly one entry of matching
/// shape and that the store holds nothing else.
template <class Real>
void bind_weights(const NetworkSpec& spec, const BasicWeightStore<Real>& store) {
  std::size_t convs = 0;
  for (const auto& l : spec.layers()) {
    if (l.kind != LayerKind::kConvRelu) continue;
    ++convs;
    if (!store.contains(l.name)) throw ShapeError("weight store is missing layer '" + l.name + "'");
    const auto& p = store.at(l.name);
    require_shape(p.kernels.shape(), l.geom.kernel_shape(), "weights for " + l.name);
    require_shape(p.bias.shape(), Shape{l.geom.out_channels}, "bias for " + l.name);
  }
  if (store.size() != convs) {
    for (const auto& [name, p] : store.entries()) {
      const auto idx = spec.find(name);
      if (!idx || spec.layers()[*idx].kind != LayerKind::kConvRelu) {
        throw ShapeError("weight store has an entry '" + name + "' that the network does not use");
      }
    }
  }
}

/// He-scaled normal kernels (std sqrt(2 / fan_in)), zero biases.
inline WeightStore random_weights(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const auto& l : spec.layers()) {
    if (l.kind != LayerKind::kConvRelu) continue;
    const auto fan_in = static_cast<double>(l.geom.in_channels * l.geom.kernel_h * l.geom.kernel_w);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
    Tensor k(l.geom.kernel_shape());
    for (auto& v : k.data()) v = dist(rng);
    store.set(l.name, {std::move(k), Tensor(Shape{l.geom.out_channels})});
  }
  return store;
}

/// Everything one layer's reverse pass needs, plus its output.
template <class Real>
struct LayerRecord {
  std::string name;
  LayerKind kind = LayerKind::kConvRelu;
  Shape input_shape;
  BasicTensor<Real> pre_activation;  // conv layers
  PoolRecord pool;                   // pool layers
  BasicTensor<Real> output;          // post-rectification or pooled
};

/// Layer outputs of one forward pass, from the first layer through the
/// deepest requested one.
template <class Real>
class BasicActivationTrace {
 public:
  const Shape& input_shape() const { return input_shape_; }
  const std::vector<LayerRecord<Real>>& records() const { return records_; }

  bool contains(const std::string& layer) const { return index_.count(layer) != 0; }

  const BasicTensor<Real>& activation(const std::string& layer) const {
    const auto it = index_.find(layer);
    if (it == index_.end()) throw ArgumentError("layer '" + layer + "' is not in the activation trace");
    return records_[it->second].output;
  }

  std::vector<std::string> layer_names() const {
    std::vector<std::string> out;
    for (const auto& r : records_) out.push_back(r.name);
    return out;
  }

 private:
  template <class R>
  friend BasicActivationTrace<R> forward(const NetworkSpec&, const BasicWeightStore<R>&, const BasicTensor<R>&,
                                         const std::set<std::string>&);

  Shape input_shape_;
  std::vector<LayerRecord<Real>> records_;
  std::map<std::string, std::size_t> index_;
};

using ActivationTrace = BasicActivationTrace<float>;

/// Runs the network on x (shape [C,H,W]) up to the deepest layer named in
/// `capture`; every layer up to that point is recorded.
template <class Real>
BasicActivationTrace<Real> forward(const NetworkSpec& spec, const BasicWeightStore<Real>& w, const BasicTensor<Real>& x,
                                   const std::set<std::string>& capture) {
  if (capture.empty()) throw ArgumentError("forward: capture set is empty");
  std::size_t deepest = 0;
  for (const auto& name : capture) deepest = std::max(deepest, spec.index_of(name));

  require_rank(x.shape(), 3, "forward input");
  if (x.extent(0) != spec.input_channels()) {
    throw ShapeError("forward: input has " + std::to_string(x.extent(0)) + " channels, network expects " +
                     std::to_string(spec.input_channels()));
  }
  const std::size_t divisor = std::size_t{1} << spec.pools_through(deepest);
  if (x.extent(1) % divisor != 0 || x.extent(2) % divisor != 0) {
    throw ShapeError("forward: input extents " + x.shape().str() + " must be divisible by " +
                     std::to_string(divisor) + " to reach layer " + spec.layers()[deepest].name);
  }

  BasicActivationTrace<Real> trace;
  trace.input_shape_ = x.shape();
  const BasicTensor<Real>* current = &x;
  for (std::size_t i = 0; i <= deepest; ++i) {
    const LayerSpec& l = spec.layers()[i];
    LayerRecord<Real> rec;
    rec.name = l.name;
    rec.kind = l.kind;
    rec.input_shape = current->shape();
    if (l.kind == LayerKind::kConvRelu) {
      const auto& p = w.at(l.name);
      rec.pre_activation = conv2d_forward(*current, p.kernels, p.bias, l.geom);
      rec.output = relu_forward(rec.pre_activation);
    } else {
      auto pooled = maxpool2x2_forward(*current);
      rec.output = std::move(pooled.output);
      rec.pool = std::move(pooled.record);
    }
    trace.index_[l.name] = trace.records_.size();
    trace.records_.push_back(std::move(rec));
    current = &trace.records_.back().output;
  }
  return trace;
}

/// Gradient with respect to the input of sum_l <activation_l, cotangent_l>.
template <class Real>
BasicTensor<Real> backward_to_input(const NetworkSpec& spec, const BasicWeightStore<Real>& w,
                                    const BasicActivationTrace<Real>& trace,
                                    const std::map<std::string, BasicTensor<Real>>& cotangents) {
  for (const auto& [name, cot] : cotangents) {
    if (!trace.contains(name)) throw ArgumentError("cotangent supplied for uncaptured layer '" + name + "'");
    require_shape(cot.shape(), trace.activation(name).shape(), "cotangent for " + name);
  }

  const auto& records = trace.records();
  BasicTensor<Real> grad;
  for (std::size_t n = records.size(); n-- > 0;) {
    const auto& rec = records[n];
    if (auto it = cotangents.find(rec.name); it != cotangents.end()) {
      if (grad.empty()) {
        grad = it->second;
      } else {
        accumulate(grad, it->second);
      }
    }
    if (grad.empty()) continue;
    if (rec.kind == LayerKind::kConvRelu) {
      const LayerSpec& l = spec.layers()[spec.index_of(rec.name)];
      const auto masked = relu_backward(rec.pre_activation, grad);
      grad = conv2d_backward(rec.input_shape, w.at(rec.name).kernels, masked, l.geom);
    } else {
      grad = maxpool2x2_backward(rec.pool, grad);
    }
  }
  if (grad.empty()) return BasicTensor<Real>(trace.input_shape());
  return grad;
}

}  // namespace synthima
