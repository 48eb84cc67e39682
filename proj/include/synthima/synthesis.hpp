#pragma once

// Iterative image synthesis: descend the combined content/style loss from a
// seeded white-noise image, N <- N - step * dL/dN.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "synthima/error.hpp"
#include "synthima/image_io.hpp"
#include "synthima/network.hpp"
#include "synthima/style.hpp"
#include "synthima/tensor.hpp"

namespace synthima {

enum class InitMode { kNoise, kContent };

enum class StopReason { kMaxIterations, kConverged, kZeroGradient, kLineSearchExhausted };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kMaxIterations: return "max-iterations";
    case StopReason::kConverged: return "converged";
    case StopReason::kZeroGradient: return "zero-gradient";
    case StopReason::kLineSearchExhausted: return "line-search-exhausted";
  }
  return "unknown";
}

using PixelRange = std::array<std::pair<float, float>, 3>;

struct OptimizerParams {
  std::size_t max_iters = 500;
  double step = 1.0;  // initial step size, preprocessed units
  bool line_search = true;
  std::size_t max_halvings = 20;
  /// Each iteration's first trial step is the last accepted step times this
  /// factor; 1 restarts every search from the previous step.
  double step_growth = 2.0;
  /// Stop once the loss improved by less than tol (relative) over `window`
  /// iterations; tol = 0 disables the test.
  double tol = 1e-6;
  std::size_t window = 25;
  bool clamp = true;
  PixelRange clamp_range = preprocessed_range(PreprocessSpec::identity());
  InitMode init = InitMode::kNoise;
  float noise_amplitude = 50.0f;  // uniform on [-a, a]
  std::uint64_t seed = 0;

  void validate() const {
    if (!(step > 0.0) || !std::isfinite(step)) throw ArgumentError("step size must be finite and > 0");
    if (!(step_growth >= 1.0) || !std::isfinite(step_growth)) throw ArgumentError("step growth must be >= 1");
    if (!(tol >= 0.0)) throw ArgumentError("tolerance must be >= 0");
    if (window == 0) throw ArgumentError("convergence window must be >= 1");
    if (!(noise_amplitude >= 0.0f)) throw ArgumentError("noise amplitude must be >= 0");
  }
};

struct LossRecord {
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct SynthesisState {
  Tensor image;
  std::size_t iteration = 0;  // accepted update steps
  double step = 0.0;          // last accepted step size
  LossRecord initial;         // loss of the starting image
  std::vector<LossRecord> history;  // loss after each accepted step
  std::uint64_t seed = 0;
  StopReason stop = StopReason::kMaxIterations;
};

/// Raised when the loss becomes non-finite; carries the state at abort.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, SynthesisState state) : Error(msg), state_(std::move(state)) {}
  const SynthesisState& state() const { return state_; }

 private:
  SynthesisState state_;
};

template <class Real>
struct SynthesisResult {
  BasicTensor<Real> image;
  SynthesisState state;
};

template <class Real>
BasicTensor<Real> white_noise(const Shape& shape, float amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-amplitude, amplitude);
  BasicTensor<Real> t(shape);
  for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  return t;
}

template <class Real>
void clamp_pixels(BasicTensor<Real>& img, const PixelRange& range) {
  const std::size_t plane = img.extent(1) * img.extent(2);
  for (std::size_t c = 0; c < img.extent(0); ++c) {
    const auto lo = static_cast<Real>(range[c % 3].first), hi = static_cast<Real>(range[c % 3].second);
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) img[i] = std::clamp(img[i], lo, hi);
  }
}

namespace detail {

template <class Real>
struct Evaluation {
  TotalLoss<Real> loss;
  BasicActivationTrace<Real> trace;
};

template <class Real>
Evaluation<Real> evaluate(const NetworkSpec& net, const BasicWeightStore<Real>& w, const BasicTensor<Real>& x,
                          const LossTargets<Real>& targets, const LossConfig& cfg) {
  auto trace = forward(net, w, x, cfg.all_layers());
  auto loss = total_loss(trace, targets, cfg);
  return {std::move(loss), std::move(trace)};
}

inline LossRecord to_record(const LossBreakdown& b) { return {b.total, b.content, b.style}; }

}  // namespace detail

/// Synthesizes an image whose activations match `content` (content layers)
/// and whose Gram statistics match `style` (style layers). Both inputs are
/// preprocessed tensors [3, H, W]; the output takes the content's extents,
/// or the style's when no content is given.
template <class Real>
SynthesisResult<Real> synthesize(const NetworkSpec& net, const BasicWeightStore<Real>& weights,
                                 const std::optional<BasicTensor<Real>>& content,
                                 const std::optional<BasicTensor<Real>>& style, const LossConfig& cfg,
                                 const OptimizerParams& opt) {
  cfg.validate();
  opt.validate();
  if (!content && !style) throw ArgumentError("synthesize needs a content image, a style image, or both");
  if (!cfg.content_layers.empty() && !content) throw ArgumentError("content layers configured without a content image");
  if (!cfg.style_layers.empty() && !style) throw ArgumentError("style layers configured without a style image");
  if (opt.init == InitMode::kContent && !content) throw ArgumentError("content initialization needs a content image");
  bind_weights(net, weights);

  std::optional<BasicActivationTrace<Real>> content_trace, style_trace;
  if (!cfg.content_layers.empty()) content_trace = forward(net, weights, *content, cfg.content_layer_set());
  if (!cfg.style_layers.empty()) style_trace = forward(net, weights, *style, cfg.style_layer_set());
  const LossTargets<Real> targets =
      make_targets(cfg, content_trace ? &*content_trace : nullptr, style_trace ? &*style_trace : nullptr);

  const Shape shape = content ? content->shape() : style->shape();
  BasicTensor<Real> x = opt.init == InitMode::kContent ? *content : white_noise<Real>(shape, opt.noise_amplitude, opt.seed);
  if (opt.clamp) clamp_pixels(x, opt.clamp_range);

  SynthesisState state;
  state.seed = opt.seed;
  state.step = opt.step;
  auto snapshot = [&]() {
    state.image = x.template cast<float>();
    return state;
  };

  auto current = detail::evaluate(net, weights, x, targets, cfg);
  state.initial = detail::to_record(current.loss.loss);
  if (!std::isfinite(state.initial.total)) throw DivergenceError("initial loss is not finite", snapshot());

  double step = opt.step;
  state.stop = StopReason::kMaxIterations;
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    const BasicTensor<Real> grad = backward_to_input(net, weights, current.trace, current.loss.cotangents);
    if (std::all_of(grad.data().begin(), grad.data().end(), [](Real g) { return g == Real(0); })) {
      state.stop = StopReason::kZeroGradient;
      break;
    }

    auto propose = [&](double delta) {
      BasicTensor<Real> cand(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) cand[i] = static_cast<Real>(x[i] - delta * grad[i]);
      if (opt.clamp) clamp_pixels(cand, opt.clamp_range);
      return cand;
    };

    const double current_total = current.loss.loss.total;
    bool accepted = false;
    if (opt.line_search) {
      double delta = it == 0 ? step : step * opt.step_growth;
      for (std::size_t h = 0; h <= opt.max_halvings; ++h, delta *= 0.5) {
        BasicTensor<Real> cand = propose(delta);
        auto eval = detail::evaluate(net, weights, cand, targets, cfg);
        const double total = eval.loss.loss.total;
        if (std::isfinite(total) && total < current_total) {
          x = std::move(cand);
          current = std::move(eval);
          step = delta;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        state.stop = StopReason::kLineSearchExhausted;
        break;
      }
    } else {
      x = propose(step);
      current = detail::evaluate(net, weights, x, targets, cfg);
      if (!std::isfinite(current.loss.loss.total)) {
        state.iteration = it;
        throw DivergenceError("loss became non-finite at iteration " + std::to_string(it + 1), snapshot());
      }
    }

    state.history.push_back(detail::to_record(current.loss.loss));
    state.iteration = state.history.size();
    state.step = step;

    const double now = state.history.back().total;
    if (now == 0.0) {
      state.stop = StopReason::kConverged;
      break;
    }
    if (opt.tol > 0.0 && state.history.size() >= opt.window) {
      const std::size_t n = state.history.size();
      const double before = n == opt.window ? state.initial.total : state.history[n - 1 - opt.window].total;
      if (before - now <= opt.tol * std::abs(before)) {
        state.stop = StopReason::kConverged;
        break;
      }
    }
  }
  snapshot();
  return {std::move(x), std::move(state)};
}

/// Loss history as CSV: header "iteration,total,content,style", then the
/// starting image as iteration 0 and one row per accepted step.
inline void write_loss_csv(std::ostream& os, const SynthesisState& state) {
  os << "iteration,total,content,style\n";
  auto row = [&](std::size_t i, const LossRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", i, r.total, r.content, r.style);
    os << buf;
  };
  row(0, state.initial);
  for (std::size_t i = 0; i < state.history.size(); ++i) row(i + 1, state.history[i]);
}

}  // namespace synthima
