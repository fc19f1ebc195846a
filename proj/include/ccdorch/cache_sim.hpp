#pragma once

#include <cstdint>
#include <list>
#include <span>
#include <unordered_map>
#include <vector>

#include "ccdorch/task.hpp"
#include "ccdorch/topology.hpp"

namespace ccdorch {

inline constexpr std::uint32_t kDefaultBlockBytes = 64;
inline constexpr std::uint64_t kDefaultCcdL3Bytes = 32ull << 20;

// One cache block of index data: `index` counts block-sized chunks inside the
// scope (an HNSW table or one IVF list).
struct BlockId {
  MappingId scope;
  std::uint64_t index = 0;

  bool operator==(const BlockId&) const = default;
};

struct BlockIdHash {
  std::size_t operator()(const BlockId& b) const noexcept;
};

struct AccessCount {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
};

struct CacheStats {
  std::uint64_t accesses = 0;
  std::uint64_t misses = 0;
  double rate = 0.0;
  bool zero_access = true;
};

struct MissRateReport {
  std::vector<CacheStats> per_ccd;
  CacheStats aggregate;

  bool operator==(const MissRateReport& o) const;
};

// Fully-associative LRU, one independent instance per CCD.
class LlcModel {
 public:
  LlcModel(std::uint32_t ccds, std::uint64_t capacity_blocks, std::uint32_t block_bytes = kDefaultBlockBytes);
  static LlcModel from_bytes(std::uint32_t ccds, std::uint64_t l3_bytes, std::uint32_t block_bytes = kDefaultBlockBytes);

  AccessCount access(CcdId ccd, std::span<const BlockId> blocks);

  std::uint64_t capacity_blocks() const { return capacity_; }
  std::uint32_t block_bytes() const { return block_bytes_; }
  std::uint32_t ccd_count() const { return static_cast<std::uint32_t>(ccds_.size()); }
  std::size_t resident(CcdId ccd) const { return ccds_.at(ccd).lru.size(); }
  bool contains(CcdId ccd, const BlockId& b) const { return ccds_.at(ccd).where.count(b) != 0; }

  MissRateReport miss_rate_report() const;

 private:
  struct Ccd {
    std::list<BlockId> lru;  // front = most recent
    std::unordered_map<BlockId, std::list<BlockId>::iterator, BlockIdHash> where;
    std::uint64_t accesses = 0;
    std::uint64_t misses = 0;
  };
  std::vector<Ccd> ccds_;
  std::uint64_t capacity_;
  std::uint32_t block_bytes_;
};

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b);

// Blocks read by one executed task. HNSW: per touched node, its vector row
// then its adjacency row; IVF: the scanned list's rows. `touched` must hold
// exactly counters.nodes_touched node ids for HNSW tasks.
std::vector<BlockId> task_block_trace(const MappingId& id, const WorkCounters& counters,
                                      std::span<const std::uint32_t> touched,
                                      std::uint32_t block_bytes = kDefaultBlockBytes);

}  // namespace ccdorch
