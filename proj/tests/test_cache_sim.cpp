#include <gtest/gtest.h>

#include <random>

#include "ccdorch/cache_sim.hpp"
#include "ccdorch/dispatch.hpp"

using namespace ccdorch;

namespace {

BlockId blk(std::uint64_t i, TableId t = 0) { return {MappingId::hnsw(t), i}; }

}  // namespace

TEST(Llc, ColdThenHit) {
  LlcModel m(2, 8);
  std::vector<BlockId> a{blk(1)};
  auto first = m.access(0, a);
  EXPECT_EQ(first.misses, 1u);
  auto again = m.access(0, a);
  EXPECT_EQ(again.hits, 1u);
  // The other CCD has its own cache.
  EXPECT_EQ(m.access(1, a).misses, 1u);
}

TEST(Llc, HandLruTrace) {
  LlcModel m(1, 2);
  std::vector<BlockId> seq{blk(0), blk(1), blk(2), blk(0)};
  std::vector<std::uint64_t> misses;
  for (const auto& b : seq) misses.push_back(m.access(0, std::span(&b, 1)).misses);
  EXPECT_EQ(misses, (std::vector<std::uint64_t>{1, 1, 1, 1}));
  EXPECT_EQ(m.resident(0), 2u);
  EXPECT_TRUE(m.contains(0, blk(0)));
  EXPECT_TRUE(m.contains(0, blk(2)));
  EXPECT_FALSE(m.contains(0, blk(1)));
  // A recent hit protects a block from eviction.
  LlcModel r(1, 2);
  std::vector<BlockId> s2{blk(0), blk(1), blk(0), blk(2), blk(0)};
  EXPECT_EQ(r.access(0, s2).misses, 3u);
  EXPECT_FALSE(r.contains(0, blk(1)));
}

TEST(Llc, ScopesAreDistinct) {
  LlcModel m(1, 4);
  std::vector<BlockId> a{blk(5, 0), blk(5, 1), {MappingId::ivf(0, 5), 5}};
  EXPECT_EQ(m.access(0, a).misses, 3u);
}

TEST(Llc, FromBytesAndValidation) {
  auto m = LlcModel::from_bytes(12, 32ull << 20, 64);
  EXPECT_EQ(m.capacity_blocks(), (32ull << 20) / 64);
  EXPECT_THROW(LlcModel(0, 4), std::invalid_argument);
  EXPECT_THROW(LlcModel(1, 0), std::invalid_argument);
  EXPECT_THROW(LlcModel::from_bytes(1, 32, 64), std::invalid_argument);
}

TEST(Llc, EmptyReport) {
  LlcModel m(3, 4);
  auto r = m.miss_rate_report();
  ASSERT_EQ(r.per_ccd.size(), 3u);
  EXPECT_TRUE(r.aggregate.zero_access);
  EXPECT_EQ(r.aggregate.rate, 0.0);
  std::vector<BlockId> a{blk(1), blk(1), blk(2)};
  m.access(1, a);
  r = m.miss_rate_report();
  EXPECT_TRUE(r.per_ccd[0].zero_access);
  EXPECT_FALSE(r.per_ccd[1].zero_access);
  EXPECT_EQ(r.aggregate.accesses, 3u);
  EXPECT_EQ(r.aggregate.misses, 2u);
  EXPECT_DOUBLE_EQ(r.aggregate.rate, 2.0 / 3.0);
}

TEST(BlockTrace, HnswSingleNode) {
  WorkCounters c{IndexKind::Hnsw, 1, 0, 128, 32};
  std::vector<std::uint32_t> touched{4};
  auto b = task_block_trace(MappingId::hnsw(2), c, touched, 64);
  ASSERT_EQ(b.size(), 10u);
  EXPECT_EQ(b.front().index, 40u);
  EXPECT_EQ(b.back().index, 49u);
  std::vector<std::uint32_t> wrong{1, 2};
  EXPECT_THROW(task_block_trace(MappingId::hnsw(2), c, wrong, 64), std::invalid_argument);
}

TEST(BlockTrace, IvfEmptyAndSized) {
  WorkCounters c{IndexKind::Ivf, 0, 0, 128, 0};
  EXPECT_TRUE(task_block_trace(MappingId::ivf(0, 1), c, {}, 64).empty());
  c.scanned = 3;
  EXPECT_EQ(task_block_trace(MappingId::ivf(0, 1), c, {}, 64).size(), 24u);
}

TEST(BlockTrace, ReconcilesWithEstimate) {
  std::mt19937_64 rng(21);
  for (int it = 0; it < 2000; ++it) {
    const std::uint32_t bb = 32u << (rng() % 3);
    WorkCounters c;
    c.dim = 1 + rng() % 200;
    std::vector<std::uint32_t> touched;
    std::uint64_t slack_blocks;
    MappingId id;
    if (rng() % 2) {
      c.kind = IndexKind::Hnsw;
      c.degree = 1 + rng() % 64;
      c.nodes_touched = rng() % 50;
      for (std::uint32_t n = 0; n < c.nodes_touched; ++n) touched.push_back(n * 3);
      slack_blocks = 2 * c.nodes_touched;
      id = MappingId::hnsw(1);
    } else {
      c.kind = IndexKind::Ivf;
      c.scanned = rng() % 400;
      slack_blocks = 1;
      id = MappingId::ivf(1, 2);
    }
    const std::uint64_t blocks = task_block_trace(id, c, touched, bb).size();
    const std::uint64_t est = estimate_traffic(c);
    EXPECT_GE(blocks * bb, est);
    EXPECT_LE((blocks > slack_blocks ? blocks - slack_blocks : 0) * bb, est);
  }
}

TEST(Llc, StickyVersusScattered) {
  // One table of 400 nodes (5 blocks each) replayed as tasks of 40 nodes.
  std::mt19937_64 rng(2);
  std::vector<std::vector<BlockId>> tasks;
  for (int t = 0; t < 3000; ++t) {
    WorkCounters c{IndexKind::Hnsw, 40, 0, 32, 16};
    std::vector<std::uint32_t> touched;
    for (int i = 0; i < 40; ++i) touched.push_back(static_cast<std::uint32_t>(rng() % 400));
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    c.nodes_touched = touched.size();
    tasks.push_back(task_block_trace(MappingId::hnsw(0), c, touched, 64));
  }
  LlcModel sticky(12, 4000);
  std::uint64_t late_misses = 0, late_accesses = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto r = sticky.access(0, tasks[i]);
    if (i >= 1000) {
      late_misses += r.misses;
      late_accesses += r.hits + r.misses;
    }
  }
  EXPECT_EQ(late_misses, 0u);
  EXPECT_GT(late_accesses, 0u);

  LlcModel scattered(12, 1000);
  for (std::size_t i = 0; i < tasks.size(); ++i) scattered.access(static_cast<CcdId>(i % 12), tasks[i]);
  EXPECT_GT(scattered.miss_rate_report().aggregate.rate, sticky.miss_rate_report().aggregate.rate);
}
