#include "ccdorch/cache_sim.hpp"

#include <stdexcept>

#include "ccdorch/dispatch.hpp"

namespace ccdorch {

std::size_t BlockIdHash::operator()(const BlockId& b) const noexcept {
  std::uint64_t x = MappingIdHash{}(b.scope) ^ (b.index * 0x9e3779b97f4a7c15ULL);
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return static_cast<std::size_t>(x);
}

bool MissRateReport::operator==(const MissRateReport& o) const {
  auto same = [](const CacheStats& a, const CacheStats& b) {
    return a.accesses == b.accesses && a.misses == b.misses && a.zero_access == b.zero_access;
  };
  if (per_ccd.size() != o.per_ccd.size() || !same(aggregate, o.aggregate)) return false;
  for (std::size_t i = 0; i < per_ccd.size(); ++i) {
    if (!same(per_ccd[i], o.per_ccd[i])) return false;
  }
  return true;
}

LlcModel::LlcModel(std::uint32_t ccds, std::uint64_t capacity_blocks, std::uint32_t block_bytes)
    : ccds_(ccds), capacity_(capacity_blocks), block_bytes_(block_bytes) {
  if (ccds == 0) throw std::invalid_argument("cache model needs at least one CCD");
  if (capacity_blocks == 0) throw std::invalid_argument("cache capacity must be at least one block");
  if (block_bytes == 0) throw std::invalid_argument("block size must be positive");
}

LlcModel LlcModel::from_bytes(std::uint32_t ccds, std::uint64_t l3_bytes, std::uint32_t block_bytes) {
  if (block_bytes == 0) throw std::invalid_argument("block size must be positive");
  return LlcModel(ccds, l3_bytes / block_bytes, block_bytes);
}

AccessCount LlcModel::access(CcdId ccd, std::span<const BlockId> blocks) {
  auto& c = ccds_.at(ccd);
  AccessCount out;
  for (const BlockId& b : blocks) {
    auto it = c.where.find(b);
    if (it != c.where.end()) {
      c.lru.splice(c.lru.begin(), c.lru, it->second);
      ++out.hits;
      continue;
    }
    ++out.misses;
    if (c.lru.size() == capacity_) {
      c.where.erase(c.lru.back());
      c.lru.pop_back();
    }
    c.lru.push_front(b);
    c.where.emplace(b, c.lru.begin());
  }
  c.accesses += blocks.size();
  c.misses += out.misses;
  return out;
}

namespace {
CacheStats make_stats(std::uint64_t accesses, std::uint64_t misses) {
  CacheStats s;
  s.accesses = accesses;
  s.misses = misses;
  s.zero_access = accesses == 0;
  s.rate = accesses == 0 ? 0.0 : static_cast<double>(misses) / static_cast<double>(accesses);
  return s;
}
}  // namespace

MissRateReport LlcModel::miss_rate_report() const {
  MissRateReport r;
  std::uint64_t acc = 0, miss = 0;
  for (const auto& c : ccds_) {
    r.per_ccd.push_back(make_stats(c.accesses, c.misses));
    acc += c.accesses;
    miss += c.misses;
  }
  r.aggregate = make_stats(acc, miss);
  return r;
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::vector<BlockId> task_block_trace(const MappingId& id, const WorkCounters& counters,
                                      std::span<const std::uint32_t> touched, std::uint32_t block_bytes) {
  if (block_bytes == 0) throw std::invalid_argument("block size must be positive");
  std::vector<BlockId> out;
  const std::uint64_t row = std::uint64_t{counters.dim} * kElementBytes;
  if (counters.kind == IndexKind::Hnsw) {
    if (touched.size() != counters.nodes_touched) {
      throw std::invalid_argument("touched list has " + std::to_string(touched.size()) + " nodes, counters say " +
                                  std::to_string(counters.nodes_touched));
    }
    const std::uint64_t vec_blocks = ceil_div(row, block_bytes);
    const std::uint64_t adj_blocks = ceil_div(std::uint64_t{counters.degree} * kIdBytes, block_bytes);
    const std::uint64_t stride = vec_blocks + adj_blocks;
    out.reserve(touched.size() * stride);
    for (std::uint32_t node : touched) {
      for (std::uint64_t j = 0; j < stride; ++j) out.push_back({id, node * stride + j});
    }
    return out;
  }
  const std::uint64_t n = ceil_div(counters.scanned * row, block_bytes);
  out.reserve(n);
  for (std::uint64_t j = 0; j < n; ++j) out.push_back({id, j});
  return out;
}

}  // namespace ccdorch
