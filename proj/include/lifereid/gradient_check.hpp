#pragma once

// Central finite-difference check of end-to-end parameter gradients for each
// loss term, through a small two-hidden-layer encoder.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "lifereid/clustering.hpp"
#include "lifereid/core_numeric.hpp"
#include "lifereid/encoder.hpp"
#include "lifereid/losses.hpp"
#include "lifereid/rng.hpp"

namespace lifereid {

enum class LossKind { Pa, Ia, Cam, Ps, Is, Overall };

inline constexpr std::array<LossKind, 6> kAllLosses{LossKind::Pa, LossKind::Ia, LossKind::Cam,
                                                    LossKind::Ps, LossKind::Is, LossKind::Overall};

constexpr std::string_view to_string(LossKind k) noexcept {
  switch (k) {
    case LossKind::Pa: return "L_pa";
    case LossKind::Ia: return "L_ia";
    case LossKind::Cam: return "L_cam";
    case LossKind::Ps: return "L_ps";
    case LossKind::Is: return "L_is";
    case LossKind::Overall: return "L_overall";
  }
  return "?";
}

struct GradCheckConfig {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double h = 1e-6;
  double tolerance = 1e-5;
  /// Test hook: scales the analytic gradient by (1 + corrupt) before comparing.
  double corrupt = 0.0;
};

struct LossCheck {
  LossKind kind = LossKind::Pa;
  double max_rel_error = 0.0;
  std::size_t trials = 0;
};

struct GradCheckReport {
  std::vector<LossCheck> losses;
  double tolerance = 1e-5;
  bool passed() const {
    return std::all_of(losses.begin(), losses.end(), [&](const LossCheck& c) { return c.max_rel_error <= tolerance; });
  }
};

/// Randomized loss problem: fixed momentum/frozen targets, inputs, labels,
/// prototypes and camera proxies; only the online parameters vary.
struct GradProblem {
  EncoderParams online;
  std::vector<std::vector<double>> current_inputs, buffer_inputs;
  BatchView current, buffer;
  std::vector<FeatureVector> prototypes, stored_prototypes;
  ClusterAssignment assignment;
  LossWeights weights;
  TemperatureConfig temps;

  static GradProblem random(Rng& rng) {
    GradProblem p;
    const Layout layout{{5, 6, 5, 4}};
    p.online = EncoderParams::init(layout, rng);
    for (auto& v : p.online.values()) v += 0.1 * rng.normal();
    auto jitter = [&](const EncoderParams& base) {
      EncoderParams q = base;
      for (auto& v : q.values()) v += 0.2 * rng.normal();
      return q;
    };
    const EncoderParams momentum = jitter(p.online);
    const EncoderParams frozen = jitter(p.online);
    const std::size_t d_in = layout.d_in(), d_out = layout.d_out();
    auto input = [&] {
      std::vector<double> x(d_in);
      for (auto& v : x) v = rng.normal();
      return x;
    };
    auto unit = [&] {
      std::vector<double> v(d_out);
      for (auto& x : v) x = rng.normal();
      return normalize(v);
    };

    const std::size_t n_clusters = 4, n_cams = 3;
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 2; ++k) {
        p.current_inputs.push_back(input());
        p.current.pseudo_labels.push_back(c);
        p.current.camera_ids.push_back(static_cast<int>(rng.below(n_cams)));
      }
    for (const auto& x : p.current_inputs) p.current.momentum_feats.push_back(forward(momentum, x));
    for (std::size_t c = 0; c < n_clusters; ++c) p.prototypes.push_back(unit());
    p.assignment.prototypes = p.prototypes;
    for (std::size_t c = 0; c < n_clusters; ++c)
      for (std::size_t k = 0; k < n_cams; ++k)
        p.assignment.camera_proxies[{static_cast<int>(c), static_cast<int>(k)}] = unit();

    for (std::size_t i = 0; i < 5; ++i) {
      p.buffer_inputs.push_back(input());
      p.buffer.pseudo_labels.push_back(static_cast<int>(i));
      p.buffer.camera_ids.push_back(0);
    }
    for (const auto& x : p.buffer_inputs) {
      p.buffer.momentum_feats.push_back(forward(momentum, x));
      p.buffer.frozen_feats_weak.push_back(forward(frozen, x));
    }
    for (std::size_t i = 0; i < 6; ++i) p.stored_prototypes.push_back(unit());

    p.weights.lambda_ia = rng.uniform(0.5, 2.0);
    p.weights.lambda_cam = rng.uniform(0.5, 2.0);
    p.weights.lambda_ps = rng.uniform(0.5, 2.0);
    p.weights.lambda_is = rng.uniform(0.5, 2.0);
    p.weights.n_neg = 5;
    p.weights.hard_positive_topk = 1;
    p.refresh_online();
    return p;
  }

  void refresh_online() {
    current.online_feats.clear();
    buffer.online_feats.clear();
    for (const auto& x : current_inputs) current.online_feats.push_back(forward(online, x));
    for (const auto& x : buffer_inputs) buffer.online_feats.push_back(forward(online, x));
  }

  /// Loss value and feature gradients for the current and buffer batches.
  struct Eval {
    double value = 0.0;
    std::vector<std::vector<double>> current_grads, buffer_grads;
  };

  Eval evaluate(LossKind kind) const {
    Eval e;
    auto take = [](LossResult r, std::vector<std::vector<double>>& g) {
      g = std::move(r.grads);
      return r.value;
    };
    switch (kind) {
      case LossKind::Pa: e.value = take(l_pa(current, prototypes, temps.tau_pa), e.current_grads); break;
      case LossKind::Ia: e.value = take(l_ia(current, temps.tau_ia, weights.hard_positive_topk), e.current_grads); break;
      case LossKind::Cam:
        e.value = take(l_cam(current, assignment, temps.tau_c, weights.n_neg), e.current_grads);
        break;
      case LossKind::Ps: e.value = take(l_ps(buffer, stored_prototypes, temps.tau_ps), e.buffer_grads); break;
      case LossKind::Is: e.value = take(l_is(buffer, temps.tau_is), e.buffer_grads); break;
      case LossKind::Overall: {
        auto b = l_overall(current, &buffer, prototypes, stored_prototypes, weights, temps, &assignment);
        e.value = b.total;
        e.current_grads = std::move(b.current_grads);
        e.buffer_grads = std::move(b.buffer_grads);
        break;
      }
    }
    return e;
  }

  double value(LossKind kind) const { return evaluate(kind).value; }

  /// d loss / d online parameters by backpropagating the feature gradients.
  std::vector<double> analytic_gradient(LossKind kind) const {
    const Eval e = evaluate(kind);
    std::vector<double> g(online.size(), 0.0);
    for (std::size_t i = 0; i < e.current_grads.size(); ++i)
      backward_accumulate(online, forward_cached(online, current_inputs[i]), e.current_grads[i], g);
    for (std::size_t i = 0; i < e.buffer_grads.size(); ++i)
      backward_accumulate(online, forward_cached(online, buffer_inputs[i]), e.buffer_grads[i], g);
    return g;
  }

  std::vector<double> numeric_gradient(LossKind kind, double h) {
    std::vector<double> g(online.size());
    auto w = online.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + h;
      refresh_online();
      const double up = value(kind);
      w[k] = saved - h;
      refresh_online();
      const double down = value(kind);
      w[k] = saved;
      g[k] = (up - down) / (2.0 * h);
    }
    refresh_online();
    return g;
  }
};

/// ||a - b|| / max(||a||, ||b||), or 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

inline GradCheckReport run_grad_check(const GradCheckConfig& cfg) {
  GradCheckReport report;
  report.tolerance = cfg.tolerance;
  if (cfg.trials == 0) return report;
  for (LossKind k : kAllLosses) report.losses.push_back({k, 0.0, 0});
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Rng rng(derive_seed(cfg.seed, t));
    GradProblem p = GradProblem::random(rng);
    for (auto& lc : report.losses) {
      auto analytic = p.analytic_gradient(lc.kind);
      if (cfg.corrupt != 0.0)
        for (auto& v : analytic) v *= 1.0 + cfg.corrupt;
      const auto numeric = p.numeric_gradient(lc.kind, cfg.h);
      lc.max_rel_error = std::max(lc.max_rel_error, relative_error(analytic, numeric));
      ++lc.trials;
    }
  }
  return report;
}

}  // namespace lifereid
