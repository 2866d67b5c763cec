#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lifereid/core_numeric.hpp"
#include "lifereid/encoder.hpp"
#include "lifereid/error.hpp"
#include "lifereid/parallel.hpp"
#include "lifereid/rng.hpp"
#include "lifereid/synth_data.hpp"

namespace lifereid {

/// Outcome of ranking one query against a gallery.
struct QueryScore {
  bool valid = false;  // at least one positive survives the same-camera filter
  double ap = 0.0;
  bool top1_hit = false;
};

/// Ranks the gallery by descending cosine similarity (ties by gallery index),
/// drops items sharing both identity and camera with the query, and scores
/// average precision and the top-1 hit.
inline QueryScore score_query(const FeatureVector& query, int query_id, int query_cam,
                              std::span<const FeatureVector> gallery, std::span<const int> gallery_ids,
                              std::span<const int> gallery_cams) {
  if (gallery.empty()) throw Error(ErrorCode::EmptyGallery, "gallery is empty");
  if (gallery_ids.size() != gallery.size() || gallery_cams.size() != gallery.size())
    throw Error(ErrorCode::LengthMismatch, "gallery arrays differ in length");
  const std::size_t n = gallery.size();
  std::vector<double> sim(n);
  for (std::size_t g = 0; g < n; ++g) sim[g] = dot(query, gallery[g]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });

  QueryScore s;
  std::size_t rank = 0, hits = 0;
  double sum_precision = 0.0;
  for (std::size_t g : order) {
    if (gallery_ids[g] == query_id && gallery_cams[g] == query_cam) continue;
    ++rank;
    const bool relevant = gallery_ids[g] == query_id;
    if (rank == 1) s.top1_hit = relevant;
    if (relevant) {
      ++hits;
      sum_precision += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  if (hits == 0) return s;
  s.valid = true;
  s.ap = sum_precision / static_cast<double>(hits);
  return s;
}

inline double average_precision(const FeatureVector& query, std::span<const FeatureVector> gallery,
                                std::span<const int> gallery_ids, std::span<const int> gallery_cams, int query_id,
                                int query_cam) {
  return score_query(query, query_id, query_cam, gallery, gallery_ids, gallery_cams).ap;
}

/// mAP and Rank1 in percent.
struct RetrievalScore {
  double map = 0.0;
  double rank1 = 0.0;
  std::size_t valid_queries = 0;
  friend bool operator==(const RetrievalScore&, const RetrievalScore&) = default;
};

inline RetrievalScore retrieval(std::span<const FeatureVector> queries, std::span<const int> query_ids,
                                std::span<const int> query_cams, std::span<const FeatureVector> gallery,
                                std::span<const int> gallery_ids, std::span<const int> gallery_cams,
                                std::size_t threads = 1) {
  std::vector<QueryScore> scores(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t q) {
    scores[q] = score_query(queries[q], query_ids[q], query_cams[q], gallery, gallery_ids, gallery_cams);
  });
  RetrievalScore r;
  double ap_sum = 0.0, hit_sum = 0.0;
  for (const auto& s : scores) {
    if (!s.valid) continue;
    ++r.valid_queries;
    ap_sum += s.ap;
    hit_sum += s.top1_hit ? 1.0 : 0.0;
  }
  if (r.valid_queries == 0) throw Error(ErrorCode::NoValidQueries, "no query has a cross-camera positive");
  r.map = 100.0 * ap_sum / static_cast<double>(r.valid_queries);
  r.rank1 = 100.0 * hit_sum / static_cast<double>(r.valid_queries);
  return r;
}

/// Gallery features of one domain as extracted after a given step.
struct GallerySnapshot {
  int domain_id = 0;
  std::size_t step_extracted = 0;
  std::vector<FeatureVector> features;
  std::vector<int> identity_ids;
  std::vector<int> camera_ids;

  friend bool operator==(const GallerySnapshot&, const GallerySnapshot&) = default;
};

/// Query and gallery samples of one domain's test split.
struct TestSplit {
  int domain_id = 0;
  std::vector<Sample> queries;
  std::vector<Sample> gallery;

  static TestSplit from_samples(const std::vector<Sample>& samples) {
    TestSplit t;
    t.domain_id = samples.empty() ? 0 : samples.front().domain_id;
    t.queries = filter_split(samples, Split::Query);
    t.gallery = filter_split(samples, Split::Gallery);
    return t;
  }
};

inline std::vector<FeatureVector> encode_all(const EncoderParams& params, std::span<const Sample> samples,
                                             std::size_t threads = 1) {
  std::vector<FeatureVector> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) { out[i] = forward(params, samples[i].input); });
  return out;
}

inline GallerySnapshot extract_gallery(const EncoderParams& params, const TestSplit& split, std::size_t step,
                                       std::size_t threads = 1) {
  GallerySnapshot g;
  g.domain_id = split.domain_id;
  g.step_extracted = step;
  g.features = encode_all(params, split.gallery, threads);
  for (const auto& s : split.gallery) {
    g.identity_ids.push_back(s.identity_id);
    g.camera_ids.push_back(s.camera_id);
  }
  return g;
}

namespace detail {
inline void query_meta(const TestSplit& split, std::vector<int>& ids, std::vector<int>& cams) {
  for (const auto& s : split.queries) {
    ids.push_back(s.identity_id);
    cams.push_back(s.camera_id);
  }
}
}  // namespace detail

/// Cross-test: queries encoded by `params`, gallery features from `stored`.
inline RetrievalScore cross_test(const EncoderParams& params, const TestSplit& split, const GallerySnapshot& stored,
                                 std::size_t threads = 1) {
  if (stored.domain_id != split.domain_id)
    throw Error(ErrorCode::DomainMismatch, "snapshot of domain " + std::to_string(stored.domain_id) +
                                               " used with queries of domain " + std::to_string(split.domain_id));
  if (split.queries.empty()) throw Error(ErrorCode::NoValidQueries, "domain has no query samples");
  const auto q = encode_all(params, split.queries, threads);
  std::vector<int> ids, cams;
  detail::query_meta(split, ids, cams);
  return retrieval(q, ids, cams, stored.features, stored.identity_ids, stored.camera_ids, threads);
}

/// Self-test: both queries and gallery encoded by `params`.
inline RetrievalScore evaluate_domain(const EncoderParams& params, const TestSplit& split, std::size_t threads = 1) {
  if (split.queries.empty() || split.gallery.empty())
    throw Error(ErrorCode::NoValidQueries, "domain lacks query or gallery samples");
  return cross_test(params, split, extract_gallery(params, split, 0, threads), threads);
}

/// Fraction of sampled triplets (i, p, n), y_i = y_p != y_n, p != i, for which
/// d(a_i, b_p) < d(a_i, b_n) under cosine distance. Passing the same features
/// twice measures within-model order; passing new-model features as `a` and
/// old-model features as `b` measures backward compatibility.
inline double triplet_order_preservation(std::span<const FeatureVector> feats_a, std::span<const FeatureVector> feats_b,
                                         std::span<const int> ids, std::size_t n_triplets, Rng& rng) {
  const std::size_t n = ids.size();
  if (feats_a.size() != n || feats_b.size() != n) throw Error(ErrorCode::LengthMismatch, "triplet arrays misaligned");
  std::vector<std::vector<std::size_t>> by_id_pos;
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> group(n);
  {
    std::vector<int> uniq(ids.begin(), ids.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    by_id_pos.resize(uniq.size());
    for (std::size_t i = 0; i < n; ++i) {
      group[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), ids[i]) - uniq.begin());
      by_id_pos[group[i]].push_back(i);
    }
    if (uniq.size() >= 2)
      for (std::size_t i = 0; i < n; ++i)
        if (by_id_pos[group[i]].size() >= 2) anchors.push_back(i);
  }
  if (anchors.empty() || n_triplets == 0) throw Error(ErrorCode::NoValidTriplets, "no (anchor, positive, negative) triplet");
  std::size_t preserved = 0;
  for (std::size_t t = 0; t < n_triplets; ++t) {
    const std::size_t i = anchors[rng.below(anchors.size())];
    std::size_t p, m;
    const auto& same = by_id_pos[group[i]];
    do {
      p = same[rng.below(same.size())];
    } while (p == i);
    do {
      m = static_cast<std::size_t>(rng.below(n));
    } while (ids[m] == ids[i]);
    const double dp = 1.0 - dot(feats_a[i], feats_b[p]);
    const double dn = 1.0 - dot(feats_a[i], feats_b[m]);
    if (dp < dn) ++preserved;
  }
  return static_cast<double>(preserved) / static_cast<double>(n_triplets);
}

}  // namespace lifereid
