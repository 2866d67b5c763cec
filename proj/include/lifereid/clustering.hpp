#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "lifereid/core_numeric.hpp"
#include "lifereid/error.hpp"
#include "lifereid/parallel.hpp"

namespace lifereid {

/// Dense n x n matrix, row-major.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t n() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * n_, n_}; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * n_, n_}; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

inline SquareMatrix pairwise_cosine_distance(std::span<const FeatureVector> feats, std::size_t threads = 1) {
  const std::size_t n = feats.size();
  SquareMatrix d(n);
  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) d(i, j) = i == j ? 0.0 : 1.0 - dot(feats[i], feats[j]);
  });
  // Mirror the upper triangle so the result is exactly symmetric.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(j, i) = d(i, j);
  return d;
}

struct RerankParams {
  std::size_t k1 = 30;
  std::size_t k2 = 6;
  double lambda_rr = 0.3;
  double eps = 0.55;
  std::size_t min_pts = 4;

  void validate() const {
    if (k1 == 0 || k2 == 0 || min_pts == 0) throw Error(ErrorCode::InvalidConfig, "k1, k2 and min_pts must be positive");
    if (k2 > k1) throw Error(ErrorCode::InvalidConfig, "k2 must not exceed k1");
    if (!(lambda_rr >= 0.0 && lambda_rr <= 1.0)) throw Error(ErrorCode::InvalidConfig, "lambda_rr must lie in [0, 1]");
    if (!(eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "eps must be positive");
  }
};

namespace detail {

inline void require_symmetric(const SquareMatrix& d) {
  for (std::size_t i = 0; i < d.n(); ++i) {
    if (d(i, i) != 0.0) throw Error(ErrorCode::NonSymmetricInput, "distance matrix diagonal must be zero");
    for (std::size_t j = i + 1; j < d.n(); ++j)
      if (d(i, j) != d(j, i)) throw Error(ErrorCode::NonSymmetricInput, "distance matrix is not symmetric");
  }
}

/// Neighbour ranking per row: ascending distance, ties by column index.
inline std::vector<std::vector<std::size_t>> rank_rows(const SquareMatrix& d, std::size_t threads) {
  const std::size_t n = d.n();
  std::vector<std::vector<std::size_t>> rank(n);
  parallel_for(n, threads, [&](std::size_t i) {
    auto& r = rank[i];
    r.resize(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    const auto row = d.row(i);
    std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  });
  return rank;
}

/// Members of the first k+1 ranks of i whose own first k+1 ranks contain i.
inline std::vector<std::size_t> k_reciprocal(const std::vector<std::vector<std::size_t>>& rank, std::size_t i,
                                             std::size_t k) {
  std::vector<std::size_t> out;
  const std::size_t depth = std::min(k + 1, rank.size());
  for (std::size_t a = 0; a < depth; ++a) {
    const std::size_t cand = rank[i][a];
    const auto& back = rank[cand];
    if (std::find(back.begin(), back.begin() + static_cast<std::ptrdiff_t>(depth), i) !=
        back.begin() + static_cast<std::ptrdiff_t>(depth))
      out.push_back(cand);
  }
  return out;
}

}  // namespace detail

/// k-reciprocal re-ranked distance: Gaussian-weighted expanded k-reciprocal
/// sets, local query expansion over k2 neighbours, Jaccard distance between
/// the sparse encodings, then (1 - lambda) * J + lambda * dist.
inline SquareMatrix k_reciprocal_jaccard(const SquareMatrix& dist, const RerankParams& params,
                                         std::size_t threads = 1) {
  detail::require_symmetric(dist);
  const std::size_t n = dist.n();
  if (n == 0) return {};
  const std::size_t k1 = std::min(params.k1, n - 1);
  const std::size_t k2 = std::max<std::size_t>(1, std::min(params.k2, n - 1));
  const std::size_t half_k1 = static_cast<std::size_t>(std::nearbyint(static_cast<double>(k1) / 2.0));

  const auto rank = detail::rank_rows(dist, threads);

  // Sparse encodings V[i]: sorted (column, weight) pairs summing to 1.
  using Sparse = std::vector<std::pair<std::size_t, double>>;
  std::vector<Sparse> V(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto base = detail::k_reciprocal(rank, i, k1);
    std::vector<std::size_t> expanded = base;
    std::vector<std::size_t> base_sorted = base;
    std::sort(base_sorted.begin(), base_sorted.end());
    for (std::size_t cand : base) {
      auto cand_set = detail::k_reciprocal(rank, cand, half_k1);
      std::sort(cand_set.begin(), cand_set.end());
      cand_set.erase(std::unique(cand_set.begin(), cand_set.end()), cand_set.end());
      std::size_t overlap = 0;
      for (std::size_t c : cand_set)
        if (std::binary_search(base_sorted.begin(), base_sorted.end(), c)) ++overlap;
      if (static_cast<double>(overlap) > 2.0 / 3.0 * static_cast<double>(cand_set.size()))
        expanded.insert(expanded.end(), cand_set.begin(), cand_set.end());
    }
    std::sort(expanded.begin(), expanded.end());
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
    double total = 0.0;
    Sparse s;
    s.reserve(expanded.size());
    for (std::size_t j : expanded) {
      const double w = std::exp(-dist(i, j));
      s.emplace_back(j, w);
      total += w;
    }
    for (auto& e : s) e.second /= total;
    V[i] = std::move(s);
  });

  // Local query expansion: mean of the encodings of the k2 nearest ranks.
  if (k2 > 1) {
    std::vector<Sparse> Vqe(n);
    parallel_for(n, threads, [&](std::size_t i) {
      std::vector<double> acc(n, 0.0);
      std::vector<char> touched(n, 0);
      for (std::size_t a = 0; a < k2; ++a)
        for (const auto& [col, w] : V[rank[i][a]]) {
          acc[col] += w;
          touched[col] = 1;
        }
      Sparse s;
      for (std::size_t col = 0; col < n; ++col)
        if (touched[col] && acc[col] != 0.0) s.emplace_back(col, acc[col] / static_cast<double>(k2));
      Vqe[i] = std::move(s);
    });
    V = std::move(Vqe);
  }

  // Inverted index: for each column, the rows with a nonzero entry there.
  std::vector<std::vector<std::pair<std::size_t, double>>> inv(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& [col, w] : V[i]) inv[col].emplace_back(i, w);
  std::vector<double> row_mass(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : V[i]) row_mass[i] += e.second;

  SquareMatrix out(n);
  const double lambda = params.lambda_rr;
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<double> shared(n, 0.0);
    for (const auto& [col, w] : V[i])
      for (const auto& [j, wj] : inv[col]) shared[j] += std::min(w, wj);
    for (std::size_t j = 0; j < n; ++j) {
      const double union_mass = row_mass[i] + row_mass[j] - shared[j];
      const double jac = union_mass > 0.0 ? 1.0 - shared[j] / union_mass : 1.0;
      out(i, j) = i == j ? 0.0 : (1.0 - lambda) * jac + lambda * dist(i, j);
    }
  });
  return out;
}

/// DBSCAN on a precomputed distance matrix. A point is core when at least
/// min_pts points (itself included) lie within eps. Noise is -1; cluster ids
/// are assigned in order of discovery.
inline std::vector<int> dbscan(const SquareMatrix& dist, double eps, std::size_t min_pts) {
  const std::size_t n = dist.n();
  std::vector<std::vector<std::size_t>> neighbours(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (dist(i, j) <= eps) neighbours[i].push_back(j);

  constexpr int kUnvisited = -2;
  std::vector<int> labels(n, kUnvisited);
  int next_cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != kUnvisited) continue;
    if (neighbours[i].size() < min_pts) {
      labels[i] = -1;
      continue;
    }
    const int c = next_cluster++;
    labels[i] = c;
    std::deque<std::size_t> frontier(neighbours[i].begin(), neighbours[i].end());
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      if (labels[p] == -1) labels[p] = c;  // border point previously marked noise
      if (labels[p] != kUnvisited) continue;
      labels[p] = c;
      if (neighbours[p].size() >= min_pts)
        frontier.insert(frontier.end(), neighbours[p].begin(), neighbours[p].end());
    }
  }
  return labels;
}

/// Pseudo-labels with per-cluster prototypes and per-(cluster, camera) proxies.
struct ClusterAssignment {
  std::vector<int> labels;
  std::vector<FeatureVector> prototypes;
  std::vector<std::size_t> cluster_sizes;
  std::map<std::pair<int, int>, FeatureVector> camera_proxies;  // (cluster, camera) -> proxy
  std::map<std::pair<int, int>, std::size_t> camera_counts;

  std::size_t num_clusters() const noexcept { return prototypes.size(); }
  std::size_t num_noise() const noexcept {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), -1));
  }
  /// Members of each cluster in ascending sample index.
  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> m(num_clusters());
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 0) m[static_cast<std::size_t>(labels[i])].push_back(i);
    return m;
  }
};

inline ClusterAssignment assign_and_summarize(std::span<const FeatureVector> momentum_feats,
                                              std::span<const int> camera_ids, std::span<const int> labels) {
  if (momentum_feats.size() != labels.size() || camera_ids.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "assign_and_summarize: arrays differ in length");
  ClusterAssignment a;
  a.labels.assign(labels.begin(), labels.end());
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  const std::size_t C = static_cast<std::size_t>(max_label + 1);
  if (C == 0) return a;
  const std::size_t d = momentum_feats.front().size();

  std::vector<std::vector<double>> sums(C, std::vector<double>(d, 0.0));
  std::map<std::pair<int, int>, std::vector<double>> cam_sums;
  a.cluster_sizes.assign(C, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0) continue;
    auto& s = sums[static_cast<std::size_t>(l)];
    auto& cs = cam_sums.try_emplace({l, camera_ids[i]}, d, 0.0).first->second;
    for (std::size_t k = 0; k < d; ++k) {
      s[k] += momentum_feats[i][k];
      cs[k] += momentum_feats[i][k];
    }
    ++a.cluster_sizes[static_cast<std::size_t>(l)];
    ++a.camera_counts[{l, camera_ids[i]}];
  }
  a.prototypes.reserve(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (a.cluster_sizes[c] == 0) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(c) + " has no members");
    for (double& v : sums[c]) v /= static_cast<double>(a.cluster_sizes[c]);
    a.prototypes.push_back(normalize(sums[c]));
  }
  for (auto& [key, s] : cam_sums) {
    const double cnt = static_cast<double>(a.camera_counts[key]);
    for (double& v : s) v /= cnt;
    a.camera_proxies.emplace(key, normalize(s));
  }
  return a;
}

}  // namespace lifereid
