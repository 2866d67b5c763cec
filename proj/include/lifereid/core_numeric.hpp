#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lifereid/error.hpp"

namespace lifereid {

inline constexpr double kZeroNormThreshold = 1e-12;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "dot of vectors with different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// Unit-L2-norm embedding. Only normalize() and from_unit() produce one, so a
/// FeatureVector in hand is always on the sphere.
class FeatureVector {
 public:
  FeatureVector() = default;

  /// Wraps values already known to be unit norm (deserialization, tests).
  /// Rejects anything more than 1e-9 off the sphere.
  static FeatureVector from_unit(std::vector<double> values) {
    const double n = l2_norm(values);
    if (!(std::abs(n - 1.0) <= 1e-9))
      throw Error(ErrorCode::ZeroVector, "from_unit: norm " + std::to_string(n) + " is not 1");
    FeatureVector f;
    f.values_ = std::move(values);
    return f;
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  friend FeatureVector normalize(std::span<const double> v);
  std::vector<double> values_;
};

inline FeatureVector normalize(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorCode::ZeroVector, "normalize: non-finite entry");
  const double n = l2_norm(v);
  if (n < kZeroNormThreshold) throw Error(ErrorCode::ZeroVector, "normalize: norm below 1e-12");
  FeatureVector f;
  f.values_.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f.values_[i] = v[i] / n;
  return f;
}

inline double dot(const FeatureVector& a, const FeatureVector& b) { return dot(a.values(), b.values()); }

/// Probability vector produced by a softmax. Entries are strictly positive
/// when it comes from softmax_logits(); user-built ones are validated.
class ProbDistribution {
 public:
  ProbDistribution() = default;
  explicit ProbDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    double s = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw Error(ErrorCode::LengthMismatch, "probability entries must be >= 0");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error(ErrorCode::LengthMismatch, "probabilities must sum to 1");
  }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

 private:
  friend ProbDistribution softmax_logits(std::span<const double> logits);
  struct Unchecked {};
  ProbDistribution(Unchecked, std::vector<double> p) : probs_(std::move(p)) {}
  std::vector<double> probs_;
};

/// Max-subtracted softmax of raw logits.
inline ProbDistribution softmax_logits(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::EmptyKeySet, "softmax over an empty key set");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return ProbDistribution(ProbDistribution::Unchecked{}, std::move(p));
}

/// log-sum-exp with max subtraction.
inline double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::EmptyKeySet, "log-sum-exp over an empty set");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return mx + std::log(z);
}

inline std::vector<double> cosine_logits(const FeatureVector& q, std::span<const FeatureVector> keys, double tau) {
  std::vector<double> logits(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) logits[i] = dot(q, keys[i]) / tau;
  return logits;
}

inline ProbDistribution softmax_distribution(const FeatureVector& q, std::span<const FeatureVector> keys, double tau) {
  if (keys.empty()) throw Error(ErrorCode::EmptyKeySet, "softmax_distribution: no keys");
  return softmax_logits(cosine_logits(q, keys, tau));
}

/// exp(q.k_pos / tau) / sum_i exp(q.k_i / tau)
inline double softmax_similarity(const FeatureVector& q, std::span<const FeatureVector> keys, std::size_t pos_index,
                                 double tau) {
  if (keys.empty()) throw Error(ErrorCode::EmptyKeySet, "softmax_similarity: no keys");
  if (pos_index >= keys.size()) throw Error(ErrorCode::IndexOutOfRange, "softmax_similarity: positive index");
  const auto logits = cosine_logits(q, keys, tau);
  return std::exp(logits[pos_index] - log_sum_exp(logits));
}

/// KL(p || r) in nats with 0 ln 0 = 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> r) {
  if (p.size() != r.size()) throw Error(ErrorCode::LengthMismatch, "kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(r[i]));
  return std::max(s, 0.0);
}

inline double kl_divergence(const ProbDistribution& p, const ProbDistribution& r) {
  return kl_divergence(p.probs(), r.probs());
}

/// Removes the radial component: g - (g.u) u for unit u.
inline std::vector<double> tangent_project(const FeatureVector& u, std::span<const double> g) {
  const double along = dot(u.values(), g);
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] - along * u[i];
  return out;
}

/// Temperatures of the five softmax-based losses.
struct TemperatureConfig {
  double tau_pa = 0.5;
  double tau_ia = 0.1;
  double tau_c = 0.07;
  double tau_ps = 0.1;
  double tau_is = 0.2;

  void validate() const {
    for (double t : {tau_pa, tau_ia, tau_c, tau_ps, tau_is})
      if (!(t > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperatures must be strictly positive");
  }
};

}  // namespace lifereid
