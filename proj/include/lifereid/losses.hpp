#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "lifereid/clustering.hpp"
#include "lifereid/core_numeric.hpp"
#include "lifereid/error.hpp"

namespace lifereid {

/// Features of one mini-batch under the three encoders. Only online_feats
/// carry gradient; the other arrays are constants.
struct BatchView {
  std::vector<FeatureVector> online_feats;       // theta on strong views
  std::vector<FeatureVector> momentum_feats;     // theta_m on strong views
  std::vector<FeatureVector> frozen_feats_weak;  // theta_{s-1} on weak views (rehearsal batches)
  std::vector<int> pseudo_labels;
  std::vector<int> camera_ids;

  std::size_t size() const noexcept { return online_feats.size(); }
};

/// Scalar loss and its gradient with respect to each online feature. The
/// gradients are tangent to the unit sphere at the corresponding feature.
struct LossResult {
  double value = 0.0;
  std::vector<std::vector<double>> grads;

  static LossResult zeros(std::size_t n, std::size_t d) {
    return {0.0, std::vector<std::vector<double>>(n, std::vector<double>(d, 0.0))};
  }
};

struct LossWeights {
  double lambda_ia = 1.0;
  double lambda_ps = 10.0;
  double lambda_is = 20.0;
  double lambda_cam = 0.0;
  std::size_t n_neg = 50;
  /// Number of hardest positives averaged into the instance-loss positive
  /// view. 1 selects the single hardest positive.
  std::size_t hard_positive_topk = 1;

  void validate() const {
    for (double l : {lambda_ia, lambda_ps, lambda_is, lambda_cam})
      if (!(l >= 0.0)) throw Error(ErrorCode::InvalidConfig, "loss weights must be non-negative");
    if (n_neg == 0) throw Error(ErrorCode::InvalidConfig, "n_neg must be positive");
    if (hard_positive_topk == 0) throw Error(ErrorCode::InvalidConfig, "hard_positive_topk must be positive");
  }
};

namespace detail {

inline void require_batch_shape(const BatchView& b, bool need_momentum, bool need_frozen) {
  const std::size_t n = b.online_feats.size();
  if ((need_momentum && b.momentum_feats.size() != n) || (need_frozen && b.frozen_feats_weak.size() != n))
    throw Error(ErrorCode::LengthMismatch, "batch feature arrays differ in length");
}

/// -log softmax(q.K/tau)[pos]; adds the tangent gradient times `scale` to g.
inline double add_contrastive_term(const FeatureVector& q, std::span<const FeatureVector> keys, std::size_t pos,
                                   double tau, double scale, std::vector<double>& g) {
  const auto logits = cosine_logits(q, keys, tau);
  const double lse = log_sum_exp(logits);
  const std::size_t d = q.size();
  std::vector<double> euclid(d, 0.0);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const double p = std::exp(logits[k] - lse);
    const double c = (p - (k == pos ? 1.0 : 0.0)) / tau;
    for (std::size_t t = 0; t < d; ++t) euclid[t] += c * keys[k][t];
  }
  const auto tangent = tangent_project(q, euclid);
  for (std::size_t t = 0; t < d; ++t) g[t] += scale * tangent[t];
  return lse - logits[pos];
}

/// KL(softmax(q.K/tau) || reference); adds the tangent gradient times `scale`.
inline double add_kl_term(const FeatureVector& q, std::span<const FeatureVector> keys, const ProbDistribution& reference,
                          double tau, double scale, std::vector<double>& g) {
  const auto logits = cosine_logits(q, keys, tau);
  const double lse = log_sum_exp(logits);
  std::vector<double> logp(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) logp[k] = logits[k] - lse;
  double kl = 0.0;
  for (std::size_t k = 0; k < keys.size(); ++k) kl += std::exp(logp[k]) * (logp[k] - std::log(reference[k]));
  const std::size_t d = q.size();
  std::vector<double> euclid(d, 0.0);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const double p = std::exp(logp[k]);
    const double dz = p * (logp[k] - std::log(reference[k]) - kl) / tau;
    for (std::size_t t = 0; t < d; ++t) euclid[t] += dz * keys[k][t];
  }
  const auto tangent = tangent_project(q, euclid);
  for (std::size_t t = 0; t < d; ++t) g[t] += scale * tangent[t];
  return std::max(kl, 0.0);
}

}  // namespace detail

/// Prototype-level contrastive adaptation loss: mean over the batch of
/// -log S(f(x_i|theta), P, tau_pa) with the item's own cluster as positive.
inline LossResult l_pa(const BatchView& batch, std::span<const FeatureVector> prototypes, double tau_pa) {
  const std::size_t n = batch.size();
  if (n == 0) return {};
  if (batch.pseudo_labels.size() != n) throw Error(ErrorCode::LengthMismatch, "l_pa: labels");
  LossResult r = LossResult::zeros(n, batch.online_feats.front().size());
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = batch.pseudo_labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= prototypes.size())
      throw Error(ErrorCode::NoisyLabelInBatch, "l_pa: batch item without a valid cluster");
    r.value += scale * detail::add_contrastive_term(batch.online_feats[i], prototypes, static_cast<std::size_t>(y),
                                                    tau_pa, scale, r.grads[i]);
  }
  return r;
}

/// Indices of same-label momentum features (anchor excluded), ordered from
/// hardest (lowest similarity to the anchor) to easiest; ties by index.
inline std::vector<std::size_t> hardest_positives(const BatchView& batch, std::size_t anchor) {
  std::vector<std::size_t> cand;
  for (std::size_t j = 0; j < batch.size(); ++j)
    if (j != anchor && batch.pseudo_labels[j] == batch.pseudo_labels[anchor]) cand.push_back(j);
  std::vector<double> sim(batch.size(), 0.0);
  for (std::size_t j : cand) sim[j] = dot(batch.online_feats[anchor], batch.momentum_feats[j]);
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return sim[a] < sim[b]; });
  return cand;
}

/// Instance-level contrastive adaptation loss with hardest-positive mining.
/// Keys per anchor: the hard positive view followed by the momentum features
/// of every item with a different pseudo-label.
inline LossResult l_ia(const BatchView& batch, double tau_ia, std::size_t topk = 1) {
  const std::size_t n = batch.size();
  if (n == 0) return {};
  detail::require_batch_shape(batch, true, false);
  if (batch.pseudo_labels.size() != n) throw Error(ErrorCode::LengthMismatch, "l_ia: labels");
  LossResult r = LossResult::zeros(n, batch.online_feats.front().size());
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto pos = hardest_positives(batch, i);
    if (pos.empty())
      throw Error(ErrorCode::IdentityWithSingleInstance, "l_ia: anchor " + std::to_string(i) + " has no positive");
    std::vector<FeatureVector> keys;
    keys.reserve(n);
    const std::size_t k = std::min(topk, pos.size());
    if (k == 1) {
      keys.push_back(batch.momentum_feats[pos.front()]);
    } else {
      std::vector<double> mean(batch.online_feats[i].size(), 0.0);
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t t = 0; t < mean.size(); ++t) mean[t] += batch.momentum_feats[pos[a]][t];
      keys.push_back(normalize(mean));
    }
    for (std::size_t j = 0; j < n; ++j)
      if (batch.pseudo_labels[j] != batch.pseudo_labels[i]) keys.push_back(batch.momentum_feats[j]);
    r.value += scale * detail::add_contrastive_term(batch.online_feats[i], keys, 0, tau_ia, scale, r.grads[i]);
  }
  return r;
}

/// Cross-camera proxy loss. For an anchor of cluster j seen by camera k, each
/// proxy p_{jk'} (k' != k) is a positive contrasted against the n_neg proxies
/// of other clusters most similar to the anchor. Per anchor the positives'
/// terms are averaged; anchors without cross-camera positives contribute 0.
inline LossResult l_cam(const BatchView& batch, const ClusterAssignment& assignment, double tau_c, std::size_t n_neg) {
  const std::size_t n = batch.size();
  if (n == 0) return {};
  if (batch.camera_ids.size() != n || batch.pseudo_labels.size() != n)
    throw Error(ErrorCode::LengthMismatch, "l_cam: labels or camera ids");
  LossResult r = LossResult::zeros(n, batch.online_feats.front().size());
  const double scale = 1.0 / static_cast<double>(n);

  std::vector<std::pair<int, int>> keys_order;
  std::vector<FeatureVector> proxies;
  for (const auto& [key, proxy] : assignment.camera_proxies) {
    keys_order.push_back(key);
    proxies.push_back(proxy);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const int y = batch.pseudo_labels[i];
    const int cam = batch.camera_ids[i];
    if (y < 0) throw Error(ErrorCode::NoisyLabelInBatch, "l_cam: batch item without a valid cluster");
    const FeatureVector& q = batch.online_feats[i];
    std::vector<std::size_t> positives, negatives;
    for (std::size_t p = 0; p < keys_order.size(); ++p) {
      if (keys_order[p].first == y) {
        if (keys_order[p].second != cam) positives.push_back(p);
      } else {
        negatives.push_back(p);
      }
    }
    if (positives.empty()) continue;
    std::vector<double> sim(proxies.size(), 0.0);
    for (std::size_t p : negatives) sim[p] = dot(q, proxies[p]);
    std::stable_sort(negatives.begin(), negatives.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
    negatives.resize(std::min(n_neg, negatives.size()));

    std::vector<FeatureVector> keys;
    keys.reserve(negatives.size() + 1);
    keys.emplace_back();
    for (std::size_t p : negatives) keys.push_back(proxies[p]);
    const double pscale = scale / static_cast<double>(positives.size());
    for (std::size_t p : positives) {
      keys[0] = proxies[p];
      r.value += pscale * detail::add_contrastive_term(q, keys, 0, tau_c, pscale, r.grads[i]);
    }
  }
  return r;
}

/// Image-to-prototype similarity consistency: mean KL between the online
/// similarity distribution over stored prototypes and the frozen encoder's.
inline LossResult l_ps(const BatchView& buffer_batch, std::span<const FeatureVector> stored_prototypes, double tau_ps) {
  const std::size_t n = buffer_batch.size();
  if (stored_prototypes.empty()) throw Error(ErrorCode::EmptyPrototypeStore, "l_ps: no stored prototypes");
  if (n == 0) return {};
  detail::require_batch_shape(buffer_batch, false, true);
  LossResult r = LossResult::zeros(n, buffer_batch.online_feats.front().size());
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ref = softmax_distribution(buffer_batch.frozen_feats_weak[i], stored_prototypes, tau_ps);
    r.value += scale * detail::add_kl_term(buffer_batch.online_feats[i], stored_prototypes, ref, tau_ps, scale,
                                           r.grads[i]);
  }
  return r;
}

/// Image-to-image similarity consistency: per anchor, KL between
/// softmax(f(x_i|theta) . f(X|theta_m) / tau) and
/// softmax(f(x_i|theta_{s-1}) . f(X|theta_{s-1}) / tau), whole batch as keys.
inline LossResult l_is(const BatchView& buffer_batch, double tau_is) {
  const std::size_t n = buffer_batch.size();
  if (n < 2) throw Error(ErrorCode::BatchTooSmall, "l_is needs at least two buffered samples");
  detail::require_batch_shape(buffer_batch, true, true);
  LossResult r = LossResult::zeros(n, buffer_batch.online_feats.front().size());
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ref = softmax_distribution(buffer_batch.frozen_feats_weak[i], buffer_batch.frozen_feats_weak, tau_is);
    r.value += scale * detail::add_kl_term(buffer_batch.online_feats[i], buffer_batch.momentum_feats, ref, tau_is,
                                           scale, r.grads[i]);
  }
  return r;
}

struct LossBreakdown {
  double total = 0.0;
  double pa = 0.0, ia = 0.0, cam = 0.0, ps = 0.0, is = 0.0;
  std::vector<std::vector<double>> current_grads;
  std::vector<std::vector<double>> buffer_grads;
};

namespace detail {
inline void axpy_grads(double a, const LossResult& src, std::vector<std::vector<double>>& dst) {
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t t = 0; t < dst[i].size(); ++t) dst[i][t] += a * src.grads[i][t];
}
}  // namespace detail

/// L_pa + lambda_ia L_ia + lambda_cam L_cam + lambda_ps L_ps + lambda_is L_is.
/// Terms with zero weight are not evaluated. Rehearsal terms apply only when
/// a non-empty buffer batch is supplied. `assignment` is needed only when
/// lambda_cam > 0.
inline LossBreakdown l_overall(const BatchView& current, const BatchView* buffer,
                               std::span<const FeatureVector> prototypes,
                               std::span<const FeatureVector> stored_prototypes, const LossWeights& w,
                               const TemperatureConfig& t, const ClusterAssignment* assignment = nullptr) {
  LossBreakdown out;
  if (current.size() > 0) {
    const std::size_t d = current.online_feats.front().size();
    out.current_grads.assign(current.size(), std::vector<double>(d, 0.0));
    const auto pa = l_pa(current, prototypes, t.tau_pa);
    out.pa = pa.value;
    out.total = pa.value;
    detail::axpy_grads(1.0, pa, out.current_grads);
    if (w.lambda_ia > 0.0) {
      const auto ia = l_ia(current, t.tau_ia, w.hard_positive_topk);
      out.ia = ia.value;
      out.total += w.lambda_ia * ia.value;
      detail::axpy_grads(w.lambda_ia, ia, out.current_grads);
    }
    if (w.lambda_cam > 0.0) {
      if (assignment == nullptr) throw Error(ErrorCode::InvalidConfig, "camera loss needs the cluster assignment");
      const auto cam = l_cam(current, *assignment, t.tau_c, w.n_neg);
      out.cam = cam.value;
      out.total += w.lambda_cam * cam.value;
      detail::axpy_grads(w.lambda_cam, cam, out.current_grads);
    }
  }
  if (buffer != nullptr && buffer->size() > 0) {
    const std::size_t d = buffer->online_feats.front().size();
    out.buffer_grads.assign(buffer->size(), std::vector<double>(d, 0.0));
    if (w.lambda_ps > 0.0) {
      const auto ps = l_ps(*buffer, stored_prototypes, t.tau_ps);
      out.ps = ps.value;
      out.total += w.lambda_ps * ps.value;
      detail::axpy_grads(w.lambda_ps, ps, out.buffer_grads);
    }
    if (w.lambda_is > 0.0 && buffer->size() >= 2) {
      const auto is = l_is(*buffer, t.tau_is);
      out.is = is.value;
      out.total += w.lambda_is * is.value;
      detail::axpy_grads(w.lambda_is, is, out.buffer_grads);
    }
  }
  return out;
}

}  // namespace lifereid
