#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ccdorch/vector_core.hpp"

namespace ccdorch {

using ClusterId = std::uint32_t;

struct IvfParams {
  std::uint32_t nlist = 128;
  std::uint64_t seed = 200;
  std::uint32_t max_iters = 20;
};

// Default nlist for a table of `rows` vectors: the next power of two at or
// above sqrt(rows), clamped to [128, 8192] and never above `rows`.
std::uint32_t default_nlist(std::size_t rows);

struct ListScanOutcome {
  std::vector<Hit> local_hits;
  std::uint64_t scanned = 0;  // always the full list length
};

// IVF-Flat: k-means centroids plus one inverted list of row indices per
// centroid. Rows of each list are evaluated against the source VectorSet.
class IvfIndex {
 public:
  static IvfIndex build(std::shared_ptr<const VectorSet> vectors, const IvfParams& params);

  std::uint32_t nlist() const { return static_cast<std::uint32_t>(lists_.size()); }
  const VectorSet& centroids() const { return centroids_; }
  const std::vector<std::uint32_t>& list(ClusterId c) const { return lists_.at(c); }
  const VectorSet& vectors() const { return *vectors_; }
  std::shared_ptr<const VectorSet> vectors_ptr() const { return vectors_; }
  const IvfParams& params() const { return params_; }

  // The nprobe centroids nearest to q, ascending by (dist, cluster id).
  std::vector<ClusterId> select_lists(std::span<const float> q, std::size_t nprobe) const;

  // Local top-k over one list. Pure; safe to call concurrently.
  ListScanOutcome scan_list(ClusterId cluster, std::span<const float> q, std::size_t k) const;

  // select_lists + scan_list for each + merge_topk, on the calling thread.
  std::vector<Hit> search(std::span<const float> q, std::size_t k, std::size_t nprobe) const;

  bool operator==(const IvfIndex& other) const {
    return centroids_ == other.centroids_ && lists_ == other.lists_;
  }

 private:
  std::shared_ptr<const VectorSet> vectors_;
  IvfParams params_;
  VectorSet centroids_;
  std::vector<std::vector<std::uint32_t>> lists_;
};

// k-way merge of individually sorted partial results into the global top-k.
std::vector<Hit> merge_topk(const std::vector<std::vector<Hit>>& parts, std::size_t k);

// Smallest nprobe in [1, nlist] reaching mean recall@k >= target over
// `queries`; nlist when none does.
std::size_t calibrate_nprobe(const IvfIndex& index, const VectorSet& queries, std::size_t k, double target);

}  // namespace ccdorch
