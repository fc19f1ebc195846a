#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ccdorch/vector_core.hpp"

namespace ccdorch {

struct HnswParams {
  std::uint32_t M = 32;                 // max out-degree on upper levels; level 0 allows 2*M
  std::uint32_t ef_construction = 500;  // candidate width while inserting
  std::uint64_t seed = 100;
};

struct HnswSearchOutcome {
  std::vector<Hit> hits;
  // Distinct nodes whose vector was read, upper-level descent included.
  std::uint64_t nodes_touched = 0;
  // The touched node ids in first-touch order, filled only on request.
  std::vector<std::uint32_t> touched;
};

// Hierarchical navigable small-world graph over a shared, immutable VectorSet.
// Built once, then searched concurrently from any number of threads.
class HnswIndex {
 public:
  static HnswIndex build(std::shared_ptr<const VectorSet> vectors, const HnswParams& params);

  HnswSearchOutcome search(std::span<const float> q, std::size_t k, std::size_t ef_search,
                           bool record_touched = false) const;

  const VectorSet& vectors() const { return *vectors_; }
  std::shared_ptr<const VectorSet> vectors_ptr() const { return vectors_; }
  const HnswParams& params() const { return params_; }
  std::uint32_t M() const { return params_.M; }
  std::uint32_t max_degree(int level) const { return level == 0 ? 2 * params_.M : params_.M; }
  std::size_t size() const { return links_.size(); }
  std::uint32_t entry_point() const { return entry_; }
  int max_level() const { return max_level_; }
  int level_of(std::uint32_t node) const { return static_cast<int>(links_[node].size()) - 1; }
  const std::vector<std::uint32_t>& neighbors(std::uint32_t node, int level) const { return links_[node][level]; }

  // Structural equality: same levels, adjacency and entry point.
  bool same_structure(const HnswIndex& other) const;

 private:
  struct Candidate {
    float dist;
    std::uint32_t node;
  };
  class SearchScratch;

  std::vector<Candidate> search_layer(std::span<const float> q, const std::vector<Candidate>& entries,
                                      std::size_t ef, int level, SearchScratch& scratch) const;
  Candidate greedy_descend(std::span<const float> q, Candidate cur, int level, SearchScratch& scratch) const;
  void connect(std::uint32_t node, int level, const std::vector<Candidate>& found);
  void shrink(std::uint32_t node, int level);

  std::shared_ptr<const VectorSet> vectors_;
  HnswParams params_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbors
  std::uint32_t entry_ = 0;
  int max_level_ = 0;
};

// Smallest ef in [k, ef_max] whose mean recall@k over `queries` reaches
// `target`; returns ef_max when no value does. Assumes recall grows with ef.
std::size_t calibrate_ef_search(const HnswIndex& index, const VectorSet& queries, std::size_t k, double target,
                                std::size_t ef_max = 2048);

}  // namespace ccdorch
