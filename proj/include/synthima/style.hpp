#pragma once

// Layer matrices, Gram statistics, content/style losses with their
// gradients, and the weighted combination that drives synthesis.

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "synthima/error.hpp"
#include "synthima/network.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

/// One layer's activation viewed as N feature maps (rows) by M spatial
/// positions (columns).
template <class Real>
struct LayerMatrix {
  std::string layer;
  BasicTensor<Real> values;  // [N, M]

  std::size_t rows() const { return values.extent(0); }
  std::size_t cols() const { return values.extent(1); }
};

/// Symmetric N x N inner-product matrix of a layer's feature maps.
template <class Real>
struct GramMatrix {
  std::string layer;
  BasicTensor<Real> values;  // [N, N]

  std::size_t dim() const { return values.extent(0); }
};

template <class Real>
LayerMatrix<Real> to_layer_matrix(const BasicTensor<Real>& activation, std::string layer = {}) {
  require_rank(activation.shape(), 3, "to_layer_matrix");
  const std::size_t C = activation.extent(0), M = activation.extent(1) * activation.extent(2);
  return {std::move(layer), activation.reshaped(Shape{C, M})};
}

/// Inverse of to_layer_matrix for an activation of spatial extent H x W.
template <class Real>
BasicTensor<Real> to_activation(const LayerMatrix<Real>& m, std::size_t height, std::size_t width) {
  if (height * width != m.cols()) {
    throw ShapeError("to_activation: " + std::to_string(height) + "x" + std::to_string(width) +
                     " does not match " + std::to_string(m.cols()) + " columns");
  }
  return m.values.reshaped(Shape{m.rows(), height, width});
}

namespace detail {

// G = F F^T in double, row-major N x N.
template <class Real>
std::vector<double> gram_f64(const BasicTensor<Real>& f) {
  const std::size_t N = f.extent(0), M = f.extent(1);
  std::vector<double> g(N * N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const Real* fi = &f[i * M];
    for (std::size_t j = i; j < N; ++j) {
      const Real* fj = &f[j * M];
      double acc = 0.0;
      for (std::size_t k = 0; k < M; ++k) acc += static_cast<double>(fi[k]) * static_cast<double>(fj[k]);
      g[i * N + j] = acc;
      g[j * N + i] = acc;
    }
  }
  return g;
}

}  // namespace detail

/// G_ij = sum_k F_ik F_jk, accumulated in double.
template <class Real>
GramMatrix<Real> gram(const LayerMatrix<Real>& f) {
  require_rank(f.values.shape(), 2, "gram");
  const std::size_t N = f.rows();
  const auto g = detail::gram_f64(f.values);
  BasicTensor<Real> out(Shape{N, N});
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<Real>(g[i]);
  return {f.layer, std::move(out)};
}

template <class Real>
struct LayerLoss {
  double value = 0.0;
  LayerMatrix<Real> grad;  // dLoss/dF
};

/// 1/(4 N^2 M^2) * sum_ij (G_ij - A_ij)^2 with G = gram(F); gradient
/// (G - A) F / (N^2 M^2).
template <class Real>
LayerLoss<Real> style_loss_layer(const LayerMatrix<Real>& f, const GramMatrix<Real>& target) {
  require_rank(f.values.shape(), 2, "style_loss_layer");
  const std::size_t N = f.rows(), M = f.cols();
  require_shape(target.values.shape(), Shape{N, N}, "style_loss_layer target Gram");

  auto diff = detail::gram_f64(f.values);
  double sq = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] -= static_cast<double>(target.values[i]);
    sq += diff[i] * diff[i];
  }
  const double nm2 = static_cast<double>(N) * static_cast<double>(N) * static_cast<double>(M) * static_cast<double>(M);

  BasicTensor<Real> grad(Shape{N, M});
  std::vector<double> row(M);
  for (std::size_t a = 0; a < N; ++a) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      const double d = diff[a * N + j];
      if (d == 0.0) continue;
      const Real* fj = &f.values[j * M];
      for (std::size_t k = 0; k < M; ++k) row[k] += d * static_cast<double>(fj[k]);
    }
    for (std::size_t k = 0; k < M; ++k) grad[a * M + k] = static_cast<Real>(row[k] / nm2);
  }
  return {sq / (4.0 * nm2), {f.layer, std::move(grad)}};
}

/// 1/2 * sum (F - P)^2; gradient F - P.
template <class Real>
LayerLoss<Real> content_loss_layer(const LayerMatrix<Real>& f, const LayerMatrix<Real>& p) {
  require_shape(p.values.shape(), f.values.shape(), "content_loss_layer target");
  BasicTensor<Real> grad(f.values.shape());
  double sq = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const double d = static_cast<double>(f.values[i]) - static_cast<double>(p.values[i]);
    sq += d * d;
    grad[i] = static_cast<Real>(d);
  }
  return {0.5 * sq, {f.layer, std::move(grad)}};
}

/// Squared MMD between the columns of F and of S under k(x, y) = (x^T y)^2,
/// computed from explicit kernel sums:
/// (1/M^2) [sum_kk' k(f_k, f_k') + sum_kk' k(s_k, s_k') - 2 sum_kk' k(f_k, s_k')].
template <class Real>
double mmd_second_order(const LayerMatrix<Real>& f, const LayerMatrix<Real>& s) {
  require_rank(f.values.shape(), 2, "mmd_second_order");
  require_rank(s.values.shape(), 2, "mmd_second_order");
  if (f.rows() != s.rows()) throw ShapeError("mmd_second_order: feature dimensions differ");
  if (f.cols() != s.cols()) throw ShapeError("mmd_second_order: sample counts differ");
  const std::size_t N = f.rows(), M = f.cols();
  auto kernel_sum = [&](const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
    double total = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      for (std::size_t l = 0; l < M; ++l) {
        double ip = 0.0;
        for (std::size_t n = 0; n < N; ++n) ip += static_cast<double>(a[n * M + k]) * static_cast<double>(b[n * M + l]);
        total += ip * ip;
      }
    }
    return total;
  };
  const double mm = static_cast<double>(M) * static_cast<double>(M);
  return (kernel_sum(f.values, f.values) + kernel_sum(s.values, s.values) - 2.0 * kernel_sum(f.values, s.values)) / mm;
}

// ---------------------------------------------------------------------------
// Weighted combination

struct LayerWeight {
  std::string layer;
  double weight = 1.0;
};

struct LossConfig {
  std::vector<LayerWeight> content_layers;
  std::vector<LayerWeight> style_layers;
  double alpha = 1.0;         // content weight
  double beta = 1000.0;       // style weight
  double content_norm = 1.0;  // k_c
  double style_norm = 1.0;    // k_s

  /// Style on the first conv of every block (equal weights summing to 1);
  /// content on conv4_2 when present, else the deepest conv layer.
  static LossConfig defaults_for(const NetworkSpec& spec) {
    LossConfig cfg;
    std::vector<std::string> firsts;
    for (const auto& name : spec.conv_layer_names()) {
      if (name.size() > 2 && name.compare(name.size() - 2, 2, "_1") == 0) firsts.push_back(name);
    }
    for (const auto& name : firsts) cfg.style_layers.push_back({name, 1.0 / static_cast<double>(firsts.size())});
    const auto convs = spec.conv_layer_names();
    if (spec.find("conv4_2")) {
      cfg.content_layers.push_back({"conv4_2", 1.0});
    } else if (!convs.empty()) {
      cfg.content_layers.push_back({convs.back(), 1.0});
    }
    return cfg;
  }

  void validate() const {
    if (content_layers.empty() && style_layers.empty()) throw ArgumentError("loss config selects no layers");
    for (const auto* group : {&content_layers, &style_layers}) {
      for (const auto& lw : *group) {
        if (!(lw.weight >= 0.0) || !std::isfinite(lw.weight)) {
          throw ArgumentError("layer weight for '" + lw.layer + "' must be finite and >= 0");
        }
      }
    }
    for (double v : {alpha, beta}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("alpha and beta must be finite and >= 0");
    }
    for (double v : {content_norm, style_norm}) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError("loss normalizers must be finite and > 0");
    }
  }

  std::set<std::string> content_layer_set() const {
    std::set<std::string> s;
    for (const auto& lw : content_layers) s.insert(lw.layer);
    return s;
  }
  std::set<std::string> style_layer_set() const {
    std::set<std::string> s;
    for (const auto& lw : style_layers) s.insert(lw.layer);
    return s;
  }
  std::set<std::string> all_layers() const {
    auto s = content_layer_set();
    s.merge(style_layer_set());
    return s;
  }
};

/// Content activations P^l and style Grams A^l the synthesis is matched to.
template <class Real>
struct LossTargets {
  std::map<std::string, LayerMatrix<Real>> content;
  std::map<std::string, GramMatrix<Real>> style;
};

template <class Real>
LossTargets<Real> make_targets(const LossConfig& cfg, const BasicActivationTrace<Real>* content_trace,
                               const BasicActivationTrace<Real>* style_trace) {
  LossTargets<Real> t;
  if (!cfg.content_layers.empty()) {
    if (!content_trace) throw ArgumentError("content layers configured but no content trace supplied");
    for (const auto& lw : cfg.content_layers) {
      t.content.emplace(lw.layer, to_layer_matrix(content_trace->activation(lw.layer), lw.layer));
    }
  }
  if (!cfg.style_layers.empty()) {
    if (!style_trace) throw ArgumentError("style layers configured but no style trace supplied");
    for (const auto& lw : cfg.style_layers) {
      t.style.emplace(lw.layer, gram(to_layer_matrix(style_trace->activation(lw.layer), lw.layer)));
    }
  }
  return t;
}

struct LossBreakdown {
  double total = 0.0;
  double content = 0.0;  // sum_l w_l * content_l
  double style = 0.0;    // sum_l w_l * style_l
};

template <class Real>
struct TotalLoss {
  LossBreakdown loss;
  std::map<std::string, BasicTensor<Real>> cotangents;  // d total / d activation, per layer
};

/// total = alpha/k_c * sum_l w_l content_l + beta/k_s * sum_l w_l style_l,
/// with per-layer cotangents shaped like the activations.
template <class Real>
TotalLoss<Real> total_loss(const BasicActivationTrace<Real>& current, const LossTargets<Real>& targets,
                           const LossConfig& cfg) {
  cfg.validate();
  TotalLoss<Real> out;
  auto add_cotangent = [&](const std::string& layer, const LayerMatrix<Real>& g, double scale,
                           const BasicTensor<Real>& act) {
    BasicTensor<Real> c = to_activation(g, act.extent(1), act.extent(2));
    for (auto& v : c.data()) v = static_cast<Real>(scale * static_cast<double>(v));
    if (auto it = out.cotangents.find(layer); it != out.cotangents.end()) {
      accumulate(it->second, c);
    } else {
      out.cotangents.emplace(layer, std::move(c));
    }
  };
  auto activation = [&](const std::string& layer) -> const BasicTensor<Real>& {
    if (!current.contains(layer)) throw ArgumentError("trace is missing configured layer '" + layer + "'");
    return current.activation(layer);
  };

  const double content_scale = cfg.alpha / cfg.content_norm;
  const double style_scale = cfg.beta / cfg.style_norm;
  for (const auto& lw : cfg.content_layers) {
    const auto& act = activation(lw.layer);
    const auto it = targets.content.find(lw.layer);
    if (it == targets.content.end()) throw ArgumentError("no content target for layer '" + lw.layer + "'");
    const auto l = content_loss_layer(to_layer_matrix(act, lw.layer), it->second);
    out.loss.content += lw.weight * l.value;
    if (content_scale * lw.weight != 0.0) add_cotangent(lw.layer, l.grad, content_scale * lw.weight, act);
  }
  for (const auto& lw : cfg.style_layers) {
    const auto& act = activation(lw.layer);
    const auto it = targets.style.find(lw.layer);
    if (it == targets.style.end()) throw ArgumentError("no style target for layer '" + lw.layer + "'");
    const auto l = style_loss_layer(to_layer_matrix(act, lw.layer), it->second);
    out.loss.style += lw.weight * l.value;
    if (style_scale * lw.weight != 0.0) add_cotangent(lw.layer, l.grad, style_scale * lw.weight, act);
  }
  out.loss.total = content_scale * out.loss.content + style_scale * out.loss.style;
  return out;
}

/// Convenience form taking the three traces directly.
template <class Real>
TotalLoss<Real> total_loss(const BasicActivationTrace<Real>& current, const BasicActivationTrace<Real>* content_trace,
                           const BasicActivationTrace<Real>* style_trace, const LossConfig& cfg) {
  return total_loss(current, make_targets(cfg, content_trace, style_trace), cfg);
}

}  // namespace synthima
