#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lifereid/core_numeric.hpp"
#include "lifereid/error.hpp"
#include "lifereid/rng.hpp"

namespace lifereid {

/// Widths of an MLP: {d_in, hidden..., d_out}. Parameters are stored layer by
/// layer as W (out x in, row-major) followed by b (out).
struct Layout {
  std::vector<std::size_t> widths;

  std::size_t num_layers() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t d_in() const noexcept { return widths.front(); }
  std::size_t d_out() const noexcept { return widths.back(); }

  std::size_t param_count() const noexcept {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l + 1] * (widths[l] + 1);
    return n;
  }
  /// Offset of layer l's weight block; its bias block follows at
  /// weight_offset(l) + in * out.
  std::size_t weight_offset(std::size_t l) const noexcept {
    std::size_t n = 0;
    for (std::size_t k = 0; k < l; ++k) n += widths[k + 1] * (widths[k] + 1);
    return n;
  }
  std::size_t bias_offset(std::size_t l) const noexcept { return weight_offset(l) + widths[l] * widths[l + 1]; }

  void validate() const {
    if (widths.size() < 2) throw Error(ErrorCode::InvalidConfig, "encoder layout needs at least input and output widths");
    for (auto w : widths)
      if (w == 0) throw Error(ErrorCode::InvalidConfig, "encoder layer widths must be positive");
  }

  friend bool operator==(const Layout&, const Layout&) = default;
};

/// Flat parameter array plus its layout. Online, momentum and frozen encoders
/// are all EncoderParams.
class EncoderParams {
 public:
  EncoderParams() = default;
  explicit EncoderParams(Layout layout) : layout_(std::move(layout)), values_(layout_.param_count(), 0.0) {
    layout_.validate();
  }
  EncoderParams(Layout layout, std::vector<double> values) : layout_(std::move(layout)), values_(std::move(values)) {
    layout_.validate();
    if (values_.size() != layout_.param_count())
      throw Error(ErrorCode::LayoutMismatch, "parameter array does not match layout");
  }

  /// Weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  static EncoderParams init(const Layout& layout, Rng& rng) {
    EncoderParams p(layout);
    for (std::size_t l = 0; l < layout.num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layout.widths[l]));
      const std::size_t begin = layout.weight_offset(l);
      const std::size_t end = layout.bias_offset(l);
      for (std::size_t i = begin; i < end; ++i) p.values_[i] = rng.uniform(-bound, bound);
    }
    return p;
  }

  const Layout& layout() const noexcept { return layout_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

 private:
  Layout layout_;
  std::vector<double> values_;
};

inline void require_same_layout(const EncoderParams& a, const EncoderParams& b) {
  if (!(a.layout() == b.layout()) || a.size() != b.size())
    throw Error(ErrorCode::LayoutMismatch, "encoder layouts differ");
}

/// Intermediates kept by forward() for backward().
struct ForwardCache {
  std::vector<std::vector<double>> activations;  // activations[0] = input, then tanh outputs of hidden layers
  std::vector<double> pre_norm;                  // linear output before normalization
  double norm = 0.0;
  FeatureVector output;
};

inline ForwardCache forward_cached(const EncoderParams& params, std::span<const double> x) {
  const Layout& L = params.layout();
  if (x.size() != L.d_in())
    throw Error(ErrorCode::DimensionMismatch,
                "encoder input has " + std::to_string(x.size()) + " entries, expected " + std::to_string(L.d_in()));
  const auto w = params.values();
  ForwardCache c;
  c.activations.reserve(L.num_layers());
  c.activations.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < L.num_layers(); ++l) {
    const std::size_t in = L.widths[l];
    const std::size_t out = L.widths[l + 1];
    const double* W = w.data() + L.weight_offset(l);
    const double* b = w.data() + L.bias_offset(l);
    const auto& h = c.activations.back();
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) s += row[i] * h[i];
      z[o] = s;
    }
    if (l + 1 < L.num_layers()) {
      for (double& v : z) v = std::tanh(v);
      c.activations.push_back(std::move(z));
    } else {
      c.pre_norm = std::move(z);
    }
  }
  c.norm = l2_norm(c.pre_norm);
  c.output = normalize(c.pre_norm);
  return c;
}

/// MLP with tanh hidden layers, linear output, then L2 normalization.
inline FeatureVector forward(const EncoderParams& params, std::span<const double> x) {
  return forward_cached(params, x).output;
}

/// Adds d(upstream . f(x))/d(params) into `grad` (same layout as params).
/// The normalization Jacobian (I - f f^T)/||v|| is applied first, so any
/// radial component of `upstream` is discarded.
inline void backward_accumulate(const EncoderParams& params, const ForwardCache& cache,
                                std::span<const double> upstream, std::span<double> grad) {
  const Layout& L = params.layout();
  if (upstream.size() != L.d_out()) throw Error(ErrorCode::DimensionMismatch, "upstream gradient size");
  if (grad.size() != params.size()) throw Error(ErrorCode::LayoutMismatch, "gradient buffer size");
  const auto w = params.values();

  std::vector<double> delta = tangent_project(cache.output, upstream);
  for (double& d : delta) d /= cache.norm;

  for (std::size_t l = L.num_layers(); l-- > 0;) {
    const std::size_t in = L.widths[l];
    const std::size_t out = L.widths[l + 1];
    const double* W = w.data() + L.weight_offset(l);
    double* gW = grad.data() + L.weight_offset(l);
    double* gb = grad.data() + L.bias_offset(l);
    const auto& h = cache.activations[l];
    for (std::size_t o = 0; o < out; ++o) {
      gb[o] += delta[o];
      double* grow = gW + o * in;
      for (std::size_t i = 0; i < in; ++i) grow[i] += delta[o] * h[i];
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * delta[o];
    }
    for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - h[i] * h[i];
    delta = std::move(prev);
  }
}

inline std::vector<double> backward(const EncoderParams& params, std::span<const double> x,
                                    std::span<const double> upstream) {
  std::vector<double> grad(params.size(), 0.0);
  backward_accumulate(params, forward_cached(params, x), upstream, grad);
  return grad;
}

/// theta_m <- alpha * theta_m + (1 - alpha) * theta, in place.
inline void ema_update_inplace(EncoderParams& theta_m, const EncoderParams& theta, double alpha) {
  require_same_layout(theta_m, theta);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "EMA alpha must lie in [0, 1]");
  auto m = theta_m.values();
  const auto t = theta.values();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = alpha * m[i] + (1.0 - alpha) * t[i];
}

inline EncoderParams ema_update(EncoderParams theta_m, const EncoderParams& theta, double alpha) {
  ema_update_inplace(theta_m, theta, alpha);
  return theta_m;
}

/// Adam with decoupled weight decay and a linear warmup on the learning rate.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double base_lr = 3.5e-4;
  std::size_t warmup_epochs = 10;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState for_params(const EncoderParams& p, double base_lr, std::size_t warmup_epochs,
                                   double weight_decay) {
    OptimizerState s;
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
    s.base_lr = base_lr;
    s.warmup_epochs = warmup_epochs;
    s.weight_decay = weight_decay;
    return s;
  }

  double effective_lr(std::size_t epoch) const noexcept {
    if (warmup_epochs == 0) return base_lr;
    return base_lr * std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(warmup_epochs));
  }

  /// Zeroes the moments and the step counter, keeping hyperparameters.
  void reset() {
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    step = 0;
  }
};

inline void adam_step(EncoderParams& params, std::span<const double> grads, OptimizerState& state,
                      std::size_t epoch) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw Error(ErrorCode::LayoutMismatch, "adam_step: parameter, gradient and moment sizes differ");
  ++state.step;
  const double lr = state.effective_lr(epoch);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto p = params.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + state.eps) + state.weight_decay * p[i]);
  }
}

/// Read-only copy of an encoder taken at a step boundary.
class FrozenEncoder {
 public:
  FrozenEncoder() = default;
  explicit FrozenEncoder(const EncoderParams& params) : params_(params) {}
  const EncoderParams& params() const noexcept { return params_; }
  FeatureVector operator()(std::span<const double> x) const { return forward(params_, x); }

 private:
  EncoderParams params_;
};

inline FrozenEncoder freeze_snapshot(const EncoderParams& theta_m) { return FrozenEncoder(theta_m); }

}  // namespace lifereid
