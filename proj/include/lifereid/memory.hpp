#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "lifereid/clustering.hpp"
#include "lifereid/core_numeric.hpp"
#include "lifereid/error.hpp"
#include "lifereid/rng.hpp"

namespace lifereid {

struct BufferEntry {
  std::vector<double> sample;  // raw encoder input
  FeatureVector prototype;     // cluster prototype at storage time; never re-encoded
  int source_domain = 0;
  std::int64_t pseudo_identity = 0;
  std::size_t source_cluster_size = 0;
  int camera_id = 0;
  std::size_t step_stored = 0;

  friend bool operator==(const BufferEntry&, const BufferEntry&) = default;
};

struct Quotas {
  std::size_t n_new = 0;
  std::size_t n_old = 0;
  friend bool operator==(const Quotas&, const Quotas&) = default;
};

/// Split of n_mem slots between new clusters and retained entries:
/// n_new = floor(|P| / (|P| + |P^o|) * n_mem), the remainder to the old side,
/// then each side is capped by what it has available and any shortfall is
/// handed to the other side.
inline Quotas quotas(std::size_t num_new_clusters, std::size_t num_old_entries, std::size_t n_mem) {
  if (num_new_clusters == 0 && num_old_entries == 0) throw Error(ErrorCode::BothEmpty, "quotas: nothing to store");
  if (n_mem == 0) throw Error(ErrorCode::InvalidConfig, "quotas: n_mem must be positive");
  const std::size_t total = num_new_clusters + num_old_entries;
  // Integer floor of |P| * n_mem / total; exact for all practical sizes.
  std::size_t n_new = static_cast<std::size_t>((static_cast<unsigned __int128>(num_new_clusters) * n_mem) / total);
  std::size_t n_old = n_mem - n_new;
  n_new = std::min(n_new, num_new_clusters);
  n_old = std::min(n_old, num_old_entries);
  // Hand unused slots to whichever side still has candidates.
  const std::size_t target = std::min(n_mem, total);
  if (n_new + n_old < target) n_new = std::min(num_new_clusters, target - n_old);
  if (n_new + n_old < target) n_old = std::min(num_old_entries, target - n_new);
  return {n_new, n_old};
}

/// Clustering-guided selection: rank clusters by size (descending, ties by
/// lower cluster id), take the top n_new, and from each store the member
/// whose momentum feature is most similar to the prototype (ties by lower
/// sample index) together with the prototype.
inline std::vector<BufferEntry> select_new(const ClusterAssignment& assignment,
                                           std::span<const std::vector<double>> samples,
                                           std::span<const FeatureVector> momentum_feats,
                                           std::span<const int> camera_ids, std::size_t n_new, int source_domain,
                                           std::size_t step, std::int64_t first_pseudo_identity) {
  const std::size_t C = assignment.num_clusters();
  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return assignment.cluster_sizes[a] > assignment.cluster_sizes[b];
  });
  order.resize(std::min(n_new, C));

  const auto members = assignment.members();
  std::vector<BufferEntry> out;
  out.reserve(order.size());
  std::int64_t next_id = first_pseudo_identity;
  for (std::size_t c : order) {
    const FeatureVector& proto = assignment.prototypes[c];
    std::size_t best = members[c].front();
    double best_sim = dot(momentum_feats[best], proto);
    for (std::size_t idx : members[c]) {
      const double s = dot(momentum_feats[idx], proto);
      if (s > best_sim) {
        best_sim = s;
        best = idx;
      }
    }
    BufferEntry e;
    e.sample = samples[best];
    e.prototype = proto;
    e.source_domain = source_domain;
    e.pseudo_identity = next_id++;
    e.source_cluster_size = assignment.cluster_sizes[c];
    e.camera_id = camera_ids.empty() ? 0 : camera_ids[best];
    e.step_stored = step;
    out.push_back(std::move(e));
  }
  return out;
}

/// Keeps the n_old entries with the largest source cluster; ties go to the
/// most recently stored, then the lowest pseudo-identity. Output is in that
/// priority order.
inline std::vector<BufferEntry> retain_old(std::span<const BufferEntry> entries, std::size_t n_old) {
  std::vector<BufferEntry> kept(entries.begin(), entries.end());
  std::stable_sort(kept.begin(), kept.end(), [](const BufferEntry& a, const BufferEntry& b) {
    if (a.source_cluster_size != b.source_cluster_size) return a.source_cluster_size > b.source_cluster_size;
    if (a.step_stored != b.step_stored) return a.step_stored > b.step_stored;
    return a.pseudo_identity < b.pseudo_identity;
  });
  kept.resize(std::min(n_old, kept.size()));
  return kept;
}

class MemoryBuffer {
 public:
  MemoryBuffer() = default;
  explicit MemoryBuffer(std::size_t capacity) : capacity_(capacity) {}
  MemoryBuffer(std::size_t capacity, std::vector<BufferEntry> entries, std::int64_t next_identity)
      : capacity_(capacity), entries_(std::move(entries)), next_identity_(next_identity) {
    if (entries_.size() > capacity_) throw Error(ErrorCode::InvalidConfig, "buffer holds more entries than capacity");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::span<const BufferEntry> entries() const noexcept { return entries_; }
  std::int64_t next_identity() const noexcept { return next_identity_; }

  std::vector<FeatureVector> prototypes() const {
    std::vector<FeatureVector> p;
    p.reserve(entries_.size());
    for (const auto& e : entries_) p.push_back(e.prototype);
    return p;
  }

  /// Step-boundary update: quota split, clustering-guided selection of new
  /// entries, retention of old ones. Retained entries come first.
  Quotas update(const ClusterAssignment& assignment, std::span<const std::vector<double>> samples,
                std::span<const FeatureVector> momentum_feats, std::span<const int> camera_ids, int source_domain,
                std::size_t step) {
    if (assignment.num_clusters() == 0 && entries_.empty()) return {};
    const Quotas q = quotas(assignment.num_clusters(), entries_.size(), capacity_);
    auto fresh = select_new(assignment, samples, momentum_feats, camera_ids, q.n_new, source_domain, step,
                            next_identity_);
    next_identity_ += static_cast<std::int64_t>(fresh.size());
    auto kept = retain_old(entries_, q.n_old);
    kept.insert(kept.end(), std::make_move_iterator(fresh.begin()), std::make_move_iterator(fresh.end()));
    entries_ = std::move(kept);
    return q;
  }

  friend bool operator==(const MemoryBuffer&, const MemoryBuffer&) = default;

 private:
  std::size_t capacity_ = 512;
  std::vector<BufferEntry> entries_;
  std::int64_t next_identity_ = 0;
};

/// Indices of min(batch_size, |buffer|) distinct entries, drawn uniformly
/// without replacement in random order.
inline std::vector<std::size_t> sample_rehearsal_batch(const MemoryBuffer& buffer, std::size_t batch_size, Rng& rng) {
  if (buffer.empty()) throw Error(ErrorCode::EmptyBuffer, "cannot sample from an empty buffer");
  std::vector<std::size_t> idx(buffer.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots become a uniform k-subset in random order.
  const std::size_t k = std::min(batch_size, idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace lifereid
