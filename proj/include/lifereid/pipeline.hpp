#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lifereid/clustering.hpp"
#include "lifereid/core_numeric.hpp"
#include "lifereid/encoder.hpp"
#include "lifereid/error.hpp"
#include "lifereid/evaluation.hpp"
#include "lifereid/losses.hpp"
#include "lifereid/memory.hpp"
#include "lifereid/rng.hpp"
#include "lifereid/synth_data.hpp"

namespace lifereid {

struct OptimizerConfig {
  double base_lr = 1e-3;
  std::size_t warmup_epochs = 1;
  double weight_decay = 5e-4;
};

/// Defaults are tuned for the synthetic benchmark at 5 x 50 iterations per
/// step. full_scale() gives the long-schedule values (30 x 400, slow EMA,
/// small learning rate with 10 warmup epochs).
struct PipelineConfig {
  std::vector<std::size_t> widths{64, 256, 64};
  std::size_t epochs_per_step = 5;
  std::size_t iterations_per_epoch = 50;
  std::size_t n_p = 8;
  std::size_t n_k = 4;
  std::size_t rehearsal_batch = 32;
  std::size_t n_mem = 512;
  double ema_alpha = 0.99;
  TemperatureConfig temps;
  LossWeights weights;
  RerankParams rerank{.k1 = 20, .k2 = 6, .lambda_rr = 0.3, .eps = 0.5, .min_pts = 4};
  OptimizerConfig optimizer;
  AugmentConfig augment;
  bool reset_optimizer_each_step = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    Layout{widths}.validate();
    if (n_p == 0 || n_k == 0) throw Error(ErrorCode::InvalidConfig, "n_p and n_k must be positive");
    if (n_mem == 0) throw Error(ErrorCode::InvalidConfig, "n_mem must be positive");
    if (!(ema_alpha >= 0.0 && ema_alpha <= 1.0)) throw Error(ErrorCode::InvalidConfig, "ema_alpha must lie in [0, 1]");
    if (!(optimizer.base_lr >= 0.0) || !(optimizer.weight_decay >= 0.0))
      throw Error(ErrorCode::InvalidConfig, "learning rate and weight decay must be non-negative");
    if (!(augment.sigma_aug >= 0.0) || !(augment.p_mask >= 0.0 && augment.p_mask <= 1.0))
      throw Error(ErrorCode::InvalidConfig, "augmentation parameters out of range");
    temps.validate();
    weights.validate();
    rerank.validate();
  }

  static PipelineConfig full_scale() {
    PipelineConfig c;
    c.epochs_per_step = 30;
    c.iterations_per_epoch = 400;
    c.ema_alpha = 0.999;
    c.optimizer = {.base_lr = 3.5e-4, .warmup_epochs = 10, .weight_decay = 5e-4};
    c.rerank = RerankParams{};
    return c;
  }

  bool rehearsal_enabled() const noexcept { return weights.lambda_ps > 0.0 || weights.lambda_is > 0.0; }
};

/// Loss-term switches matching the ablation rows: pa, pa+ia, pa+ia+ps,
/// pa+ia+is, and the full objective.
enum class Ablation { Pa, PaIa, PaIaPs, PaIaIs, Full };

inline std::string_view to_string(Ablation a) noexcept {
  switch (a) {
    case Ablation::Pa: return "pa";
    case Ablation::PaIa: return "pa_ia";
    case Ablation::PaIaPs: return "pa_ia_ps";
    case Ablation::PaIaIs: return "pa_ia_is";
    case Ablation::Full: return "full";
  }
  return "full";
}

inline std::optional<Ablation> parse_ablation(std::string_view s) {
  for (Ablation a : {Ablation::Pa, Ablation::PaIa, Ablation::PaIaPs, Ablation::PaIaIs, Ablation::Full})
    if (s == to_string(a)) return a;
  return std::nullopt;
}

/// Zeroes the weights of the loss terms the ablation row leaves out. Weights
/// of retained terms are kept as configured.
inline PipelineConfig apply_ablation(PipelineConfig cfg, Ablation a) {
  auto& w = cfg.weights;
  switch (a) {
    case Ablation::Pa: w.lambda_ia = w.lambda_ps = w.lambda_is = 0.0; break;
    case Ablation::PaIa: w.lambda_ps = w.lambda_is = 0.0; break;
    case Ablation::PaIaPs: w.lambda_is = 0.0; break;
    case Ablation::PaIaIs: w.lambda_ps = 0.0; break;
    case Ablation::Full: break;
  }
  return cfg;
}

struct PipelineState {
  EncoderParams online;
  EncoderParams momentum;
  FrozenEncoder frozen;
  OptimizerState optimizer;
  MemoryBuffer buffer;
  std::size_t step = 0;  // completed steps
  Rng rng;

  static PipelineState initial(const PipelineConfig& cfg) {
    cfg.validate();
    PipelineState s;
    Rng init_rng(derive_seed(cfg.seed, 0xE1C0DE));
    s.momentum = EncoderParams::init(Layout{cfg.widths}, init_rng);
    s.online = s.momentum;
    s.frozen = freeze_snapshot(s.momentum);
    s.optimizer = OptimizerState::for_params(s.momentum, cfg.optimizer.base_lr, cfg.optimizer.warmup_epochs,
                                             cfg.optimizer.weight_decay);
    s.buffer = MemoryBuffer(cfg.n_mem);
    s.rng = Rng(derive_seed(cfg.seed, 0xBA7C4));
    return s;
  }
};

/// Unlabeled training pool of one domain.
struct TrainPool {
  int domain_id = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<int> camera_ids;

  static TrainPool from_samples(const std::vector<Sample>& samples) {
    TrainPool p;
    p.domain_id = samples.empty() ? 0 : samples.front().domain_id;
    for (const auto& s : samples)
      if (s.split == Split::Train) {
        p.inputs.push_back(s.input);
        p.camera_ids.push_back(s.camera_id);
      }
    return p;
  }
  std::size_t size() const noexcept { return inputs.size(); }
};

/// Identity-aware mini-batch: n_p distinct clusters drawn uniformly, n_k
/// members each (with replacement only when the cluster is smaller than n_k).
/// Noise samples are never drawn. n_p shrinks to the number of clusters.
inline std::vector<std::size_t> identity_batch(std::span<const int> labels, std::size_t n_p, std::size_t n_k, Rng& rng) {
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  if (max_label < 0) throw Error(ErrorCode::NoClusters, "identity_batch: no clusters");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) members[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> clusters;
  for (std::size_t c = 0; c < members.size(); ++c)
    if (!members[c].empty()) clusters.push_back(c);
  const std::size_t take = std::min(n_p, clusters.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(clusters[i], clusters[i + rng.below(clusters.size() - i)]);

  std::vector<std::size_t> out;
  out.reserve(take * n_k);
  for (std::size_t a = 0; a < take; ++a) {
    auto pool = members[clusters[a]];
    if (pool.size() < n_k) {
      for (std::size_t k = 0; k < n_k; ++k) out.push_back(pool[rng.below(pool.size())]);
    } else {
      for (std::size_t k = 0; k < n_k; ++k) {
        std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
        out.push_back(pool[k]);
      }
    }
  }
  return out;
}

struct EpochLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t n_clusters = 0;
  std::size_t n_noise = 0;
  bool adaptation_skipped = false;
  double mean_total = 0.0, mean_pa = 0.0, mean_ia = 0.0, mean_cam = 0.0, mean_ps = 0.0, mean_is = 0.0;
};

struct StepLog {
  std::size_t step = 0;
  int domain_id = 0;
  std::vector<EpochLog> epochs;
  Quotas buffer_quotas;
  std::size_t buffer_size = 0;
};

/// Observer hook invoked after every optimizer/EMA update.
struct IterationEvent {
  std::size_t step, epoch, iteration;
  const EncoderParams& online;
  const EncoderParams& momentum_before;
  const EncoderParams& momentum_after;
  const FrozenEncoder& frozen;
};
using IterationObserver = std::function<void(const IterationEvent&)>;

/// Momentum-feature clustering of a pool: encode, re-rank, DBSCAN, summarize.
inline ClusterAssignment cluster_pool(const EncoderParams& momentum, const TrainPool& pool, const PipelineConfig& cfg,
                                      std::vector<FeatureVector>* feats_out = nullptr) {
  std::vector<FeatureVector> feats(pool.size());
  parallel_for(pool.size(), cfg.threads, [&](std::size_t i) { feats[i] = forward(momentum, pool.inputs[i]); });
  std::vector<int> labels(pool.size(), -1);
  if (pool.size() >= 2) {
    const auto dist = pairwise_cosine_distance(feats, cfg.threads);
    const auto rr = k_reciprocal_jaccard(dist, cfg.rerank, cfg.threads);
    labels = dbscan(rr, cfg.rerank.eps, cfg.rerank.min_pts);
  }
  auto a = assign_and_summarize(feats, pool.camera_ids, labels);
  if (feats_out) *feats_out = std::move(feats);
  return a;
}

namespace detail {

struct EncodedBatch {
  BatchView view;
  std::vector<ForwardCache> caches;
  std::vector<std::size_t> source;  // pool or buffer index per item
};

inline void accumulate_grads(const EncoderParams& online, const EncodedBatch& b,
                             const std::vector<std::vector<double>>& upstream, std::vector<double>& grad) {
  for (std::size_t i = 0; i < b.caches.size(); ++i) backward_accumulate(online, b.caches[i], upstream[i], grad);
}

}  // namespace detail

/// One adaptation step on a new domain: snapshot theta_{s-1}, then per epoch
/// cluster and run iterations of L_overall with Adam and EMA, then update the
/// memory buffer from a final clustering under theta_m.
inline StepLog run_step(const TrainPool& pool, PipelineState& state, const PipelineConfig& cfg,
                        const IterationObserver& observer = {}) {
  cfg.validate();
  if (pool.size() == 0) throw Error(ErrorCode::InvalidSpec, "domain has no training samples");
  StepLog log;
  log.step = state.step + 1;
  log.domain_id = pool.domain_id;

  state.frozen = freeze_snapshot(state.momentum);
  state.online = state.momentum;
  if (cfg.reset_optimizer_each_step)
    state.optimizer = OptimizerState::for_params(state.online, cfg.optimizer.base_lr, cfg.optimizer.warmup_epochs,
                                                 cfg.optimizer.weight_decay);

  const bool rehearse = cfg.rehearsal_enabled() && !state.buffer.empty();
  const auto stored_prototypes = rehearse ? state.buffer.prototypes() : std::vector<FeatureVector>{};
  const std::size_t P = state.online.size();

  for (std::size_t epoch = 0; epoch < cfg.epochs_per_step; ++epoch) {
    const auto assignment = cluster_pool(state.momentum, pool, cfg);
    EpochLog el;
    el.step = log.step;
    el.epoch = epoch;
    el.n_clusters = assignment.num_clusters();
    el.n_noise = assignment.num_noise();
    el.adaptation_skipped = assignment.num_clusters() == 0;
    if (el.adaptation_skipped && !rehearse) {
      log.epochs.push_back(el);
      continue;
    }

    for (std::size_t it = 0; it < cfg.iterations_per_epoch; ++it) {
      detail::EncodedBatch cur, buf;
      if (!el.adaptation_skipped) {
        cur.source = identity_batch(assignment.labels, cfg.n_p, cfg.n_k, state.rng);
        for (std::size_t idx : cur.source) {
          const auto strong = augment(pool.inputs[idx], AugmentMode::Strong, cfg.augment, state.rng);
          cur.caches.push_back(forward_cached(state.online, strong));
          cur.view.online_feats.push_back(cur.caches.back().output);
          cur.view.momentum_feats.push_back(forward(state.momentum, strong));
          cur.view.pseudo_labels.push_back(assignment.labels[idx]);
          cur.view.camera_ids.push_back(pool.camera_ids[idx]);
        }
      }
      if (rehearse) {
        buf.source = sample_rehearsal_batch(state.buffer, cfg.rehearsal_batch, state.rng);
        const auto entries = state.buffer.entries();
        for (std::size_t idx : buf.source) {
          const auto& e = entries[idx];
          const auto strong = augment(e.sample, AugmentMode::Strong, cfg.augment, state.rng);
          buf.caches.push_back(forward_cached(state.online, strong));
          buf.view.online_feats.push_back(buf.caches.back().output);
          buf.view.momentum_feats.push_back(forward(state.momentum, strong));
          buf.view.frozen_feats_weak.push_back(state.frozen(augment(e.sample, AugmentMode::Weak, cfg.augment, state.rng)));
          buf.view.pseudo_labels.push_back(static_cast<int>(e.pseudo_identity));
          buf.view.camera_ids.push_back(e.camera_id);
        }
      }

      const auto loss = l_overall(cur.view, rehearse ? &buf.view : nullptr, assignment.prototypes, stored_prototypes,
                                  cfg.weights, cfg.temps, &assignment);
      std::vector<double> grad(P, 0.0);
      if (!cur.caches.empty()) detail::accumulate_grads(state.online, cur, loss.current_grads, grad);
      if (!buf.caches.empty()) detail::accumulate_grads(state.online, buf, loss.buffer_grads, grad);
      adam_step(state.online, grad, state.optimizer, epoch);

      if (observer) {
        const EncoderParams before = state.momentum;
        ema_update_inplace(state.momentum, state.online, cfg.ema_alpha);
        observer(IterationEvent{log.step, epoch, it, state.online, before, state.momentum, state.frozen});
      } else {
        ema_update_inplace(state.momentum, state.online, cfg.ema_alpha);
      }

      const double inv = 1.0 / static_cast<double>(cfg.iterations_per_epoch);
      el.mean_total += inv * loss.total;
      el.mean_pa += inv * loss.pa;
      el.mean_ia += inv * loss.ia;
      el.mean_cam += inv * loss.cam;
      el.mean_ps += inv * loss.ps;
      el.mean_is += inv * loss.is;
    }
    log.epochs.push_back(el);
  }

  std::vector<FeatureVector> feats;
  const auto final_assignment = cluster_pool(state.momentum, pool, cfg, &feats);
  log.buffer_quotas = state.buffer.update(final_assignment, pool.inputs, feats, pool.camera_ids, pool.domain_id, log.step);
  log.buffer_size = state.buffer.size();
  state.step = log.step;
  return log;
}

/// One row of the metrics table. mode is "self" or "cross".
struct MetricRow {
  std::size_t step = 0;
  int domain_id = 0;
  bool seen = true;
  std::string mode;
  double map = 0.0;
  double rank1 = 0.0;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// Triplet-order fractions for a seen domain's gallery after a step:
/// within the current model, and current queries against stored features.
struct CompatRow {
  std::size_t step = 0;
  int domain_id = 0;
  double within_model = 0.0;
  double backward = 0.0;
};

struct StepSummary {
  std::size_t step = 0;
  double seen_map = 0.0, seen_rank1 = 0.0;
  double unseen_map = 0.0, unseen_rank1 = 0.0;
  bool has_unseen = false;
};

struct DomainData {
  TrainPool train;
  TestSplit test;

  static DomainData from_samples(const std::vector<Sample>& samples) {
    return {TrainPool::from_samples(samples), TestSplit::from_samples(samples)};
  }
};

struct SequenceResult {
  PipelineState state;
  std::vector<StepLog> step_logs;
  std::vector<MetricRow> metrics;
  std::vector<CompatRow> compat;
  std::vector<StepSummary> summaries;
  std::vector<GallerySnapshot> snapshots;   // every seen domain after every step
  std::vector<EncoderParams> momentum_after_step;
  std::vector<MemoryBuffer> buffer_after_step;
  std::vector<Rng::State> rng_after_step;

  /// Snapshot of `domain_id` taken at `step`, if recorded.
  const GallerySnapshot* snapshot(int domain_id, std::size_t step) const {
    for (const auto& s : snapshots)
      if (s.domain_id == domain_id && s.step_extracted == step) return &s;
    return nullptr;
  }

  const MetricRow* metric(std::size_t step, int domain_id, std::string_view mode) const {
    for (const auto& m : metrics)
      if (m.step == step && m.domain_id == domain_id && m.mode == mode) return &m;
    return nullptr;
  }
};

inline constexpr std::size_t kCompatTriplets = 20000;

/// Sequential adaptation over `seen` in the given order. After each step the
/// momentum encoder is evaluated on every domain trained so far (self-test,
/// and cross-test against the gallery stored when that domain was learned)
/// and on every unseen domain.
inline SequenceResult run_sequence(const std::vector<DomainData>& seen, const std::vector<DomainData>& unseen,
                                   const PipelineConfig& cfg, const IterationObserver& observer = {}) {
  if (seen.empty()) throw Error(ErrorCode::InvalidConfig, "run_sequence needs at least one domain");
  SequenceResult res;
  res.state = PipelineState::initial(cfg);
  std::vector<std::size_t> learned_at(seen.size(), 0);
  for (std::size_t s = 0; s < seen.size(); ++s) {
    res.step_logs.push_back(run_step(seen[s].train, res.state, cfg, observer));
    const std::size_t step = res.state.step;
    learned_at[s] = step;
    const EncoderParams& theta_m = res.state.momentum;
    res.momentum_after_step.push_back(theta_m);
    res.buffer_after_step.push_back(res.state.buffer);
    res.rng_after_step.push_back(res.state.rng.state());

    StepSummary sum;
    sum.step = step;
    for (std::size_t d = 0; d <= s; ++d) {
      const auto& test = seen[d].test;
      auto snap = extract_gallery(theta_m, test, step, cfg.threads);
      const auto self = evaluate_domain(theta_m, test, cfg.threads);
      res.metrics.push_back({step, test.domain_id, true, "self", self.map, self.rank1});
      sum.seen_map += self.map / static_cast<double>(s + 1);
      sum.seen_rank1 += self.rank1 / static_cast<double>(s + 1);
      res.snapshots.push_back(std::move(snap));
      const GallerySnapshot* stored = res.snapshot(test.domain_id, learned_at[d]);
      const auto cross = cross_test(theta_m, test, *stored, cfg.threads);
      res.metrics.push_back({step, test.domain_id, true, "cross", cross.map, cross.rank1});

      const auto current = res.snapshot(test.domain_id, step);
      Rng trng(derive_seed(cfg.seed, 0x7819 + step * 1000 + static_cast<std::uint64_t>(d)));
      CompatRow c;
      c.step = step;
      c.domain_id = test.domain_id;
      c.within_model = triplet_order_preservation(current->features, current->features, current->identity_ids,
                                                  kCompatTriplets, trng);
      c.backward = triplet_order_preservation(current->features, stored->features, current->identity_ids,
                                              kCompatTriplets, trng);
      res.compat.push_back(c);
    }
    for (const auto& u : unseen) {
      const auto self = evaluate_domain(theta_m, u.test, cfg.threads);
      res.metrics.push_back({step, u.test.domain_id, false, "self", self.map, self.rank1});
      sum.unseen_map += self.map / static_cast<double>(unseen.size());
      sum.unseen_rank1 += self.rank1 / static_cast<double>(unseen.size());
      sum.has_unseen = true;
    }
    res.summaries.push_back(sum);
  }
  return res;
}

}  // namespace lifereid
