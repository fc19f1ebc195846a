#include <gtest/gtest.h>

#include <future>
#include <random>

#include "ccdorch/submission.hpp"
#include "stress.hpp"

using namespace ccdorch;

namespace {

std::shared_ptr<const VectorSet> mixture(std::size_t n, std::uint32_t dim, std::uint64_t seed) {
  MixtureSpec s;
  s.count = n;
  s.dim = dim;
  s.seed = seed;
  return std::make_shared<const VectorSet>(generate_mixture(s));
}

RuntimeOptions options(StealMode m) {
  RuntimeOptions o;
  o.policy.mode = m;
  o.auto_windows = false;
  o.park_timeout = std::chrono::microseconds(100);
  return o;
}

Query query_of(std::span<const float> v, std::uint32_t k) {
  Query q;
  q.vector.assign(v.begin(), v.end());
  q.k = k;
  return q;
}

struct Fixture {
  std::vector<std::shared_ptr<const VectorSet>> data;
  TableRegistry tables;
};

Fixture make_tables() {
  Fixture f;
  for (TableId t = 0; t < 4; ++t) {
    auto d = mixture(600, 16, 30 + t);
    f.data.push_back(d);
    HnswParams p;
    p.M = 8;
    p.ef_construction = 64;
    f.tables.add_hnsw(t, {std::make_shared<const HnswIndex>(HnswIndex::build(d, p)), 32});
  }
  auto d = mixture(2000, 16, 50);
  f.data.push_back(d);
  IvfParams ip;
  ip.nlist = 16;
  f.tables.add_ivf(4, {std::make_shared<const IvfIndex>(IvfIndex::build(d, ip)), 8});
  return f;
}

}  // namespace

class SubmissionTest : public ::testing::TestWithParam<StealMode> {};

TEST_P(SubmissionTest, HnswQueryMatchesDirectSearch) {
  auto f = make_tables();
  Runtime rt(Topology::synthetic(2, 2), options(GetParam()));
  rt.start();
  const auto& t = f.tables.hnsw(2);
  for (std::size_t i = 0; i < 20; ++i) {
    auto q = query_of(f.data[2]->row(i * 13), 5);
    auto hits = run_hnsw_query(rt, f.tables, 2, q);
    EXPECT_EQ(hits, t.index->search(q.vector, 5, t.ef_search).hits);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].dist, 0.0f);
  }
  rt.shutdown();
}

TEST_P(SubmissionTest, IvfQueryFansOut) {
  auto f = make_tables();
  Runtime rt(Topology::synthetic(2, 2), options(GetParam()));
  rt.start();
  const auto& idx = *f.tables.ivf(4).index;
  auto q = query_of(f.data[4]->row(3), 10);
  const auto before = rt.submitted();
  auto part = run_ivf_query(rt, f.tables, 4, q, 8);
  EXPECT_EQ(rt.submitted() - before, 8u);
  EXPECT_EQ(part, idx.search(q.vector, 10, 8));
  EXPECT_EQ(run_ivf_query(rt, f.tables, 4, q, idx.nlist()), brute_force_topk(*f.data[4], q.vector, 10));
  rt.shutdown();
}

TEST_P(SubmissionTest, ConcurrentQueriesAllComplete) {
  auto f = make_tables();
  Runtime rt(Topology::synthetic(2, 2), options(GetParam()));
  rt.start();
  std::atomic<int> done{0};
  std::vector<std::thread> clients;
  for (int c = 0; c < 4; ++c) {
    clients.emplace_back([&, c] {
      for (int i = 0; i < 250; ++i) {
        const auto table = static_cast<TableId>((c + i) % 4);
        auto hits = run_hnsw_query(rt, f.tables, table, query_of(f.data[table]->row(i), 3));
        if (hits.size() == 3) done.fetch_add(1);
      }
    });
  }
  for (auto& th : clients) th.join();
  rt.shutdown();
  EXPECT_EQ(done.load(), 1000);
  EXPECT_EQ(rt.steal_stats().executed, 1000u);
}

INSTANTIATE_TEST_SUITE_P(Modes, SubmissionTest,
                         ::testing::Values(StealMode::V0RoundRobin, StealMode::V1BlindSteal, StealMode::V2CcdAware));

TEST(Submission, ShutdownRejectsNewWork) {
  Runtime rt(Topology::synthetic(1, 2), options(StealMode::V2CcdAware));
  auto q = std::make_shared<const Query>();
  SearchFunctor fn = [](const Query&) { return TaskOutput{}; };
  EXPECT_THROW(rt.submit(fn, q, MappingId::hnsw(0)), ShutdownError);
  rt.start();
  rt.submit(fn, q, MappingId::hnsw(0)).get();
  rt.shutdown();
  EXPECT_THROW(rt.submit(fn, q, MappingId::hnsw(0)), ShutdownError);
  EXPECT_EQ(rt.submitted(), 1u);
}

TEST(Submission, ShutdownDrainsQueuedWork) {
  Runtime rt(Topology::synthetic(1, 2), options(StealMode::V1BlindSteal));
  rt.start();
  std::atomic<int> done{0};
  auto q = std::make_shared<const Query>();
  for (int i = 0; i < 500; ++i) {
    rt.submit_async(
        [](const Query&) {
          std::this_thread::sleep_for(std::chrono::microseconds(20));
          return TaskOutput{};
        },
        q, MappingId::hnsw(i % 3), [&](TaskResult&&) { done.fetch_add(1); });
  }
  rt.shutdown();
  EXPECT_EQ(done.load(), 500);
}

TEST(Submission, ErrorsReachTheCaller) {
  Runtime rt(Topology::synthetic(1, 2), options(StealMode::V2CcdAware));
  rt.start();
  auto q = std::make_shared<const Query>();
  SearchFunctor bad = [](const Query&) -> TaskOutput { throw std::runtime_error("boom"); };
  EXPECT_THROW(rt.submit(bad, q, MappingId::hnsw(0)).get(), std::runtime_error);
  auto r = rt.submit(bad, q, MappingId::hnsw(0)).wait_result();
  EXPECT_TRUE(r.error);
  auto ok = rt.submit([](const Query&) { return TaskOutput{}; }, q, MappingId::hnsw(0)).get();
  EXPECT_FALSE(ok.error);
  rt.shutdown();
}

TEST(Submission, BackpressureWhenQueuesFull) {
  RuntimeOptions o = options(StealMode::V2CcdAware);
  o.queue_capacity = 1;
  Runtime rt(Topology::synthetic(1, 1), o);
  rt.start();
  std::promise<void> release;
  auto gate = release.get_future().share();
  std::promise<void> started;
  auto q = std::make_shared<const Query>();
  auto first = rt.submit(
      [gate, &started](const Query&) {
        started.set_value();
        gate.wait();
        return TaskOutput{};
      },
      q, MappingId::hnsw(0));
  started.get_future().wait();
  SearchFunctor quick = [](const Query&) { return TaskOutput{}; };
  auto second = rt.submit(quick, q, MappingId::hnsw(0));
  EXPECT_THROW(rt.submit(quick, q, MappingId::hnsw(0)), BackpressureError);
  release.set_value();
  first.get();
  second.get();
  rt.shutdown();
  EXPECT_EQ(rt.submitted(), 2u);
}

TEST(Submission, IvfResultIndependentOfMapping) {
  auto f = make_tables();
  const auto& idx = *f.tables.ivf(4).index;
  auto q = query_of(f.data[4]->row(40), 10);
  std::vector<std::vector<Hit>> results;
  for (int layout = 0; layout < 3; ++layout) {
    Runtime rt(Topology::synthetic(3, 1), options(StealMode::V2CcdAware));
    CcdMap m;
    m.loads.assign(3, 0);
    for (ClusterId c = 0; c < idx.nlist(); ++c) m.assign[MappingId::ivf(4, c)] = (c + layout) % 3;
    rt.dispatcher().publish(m);
    rt.start();
    results.push_back(run_ivf_query(rt, f.tables, 4, q, 8));
    rt.shutdown();
  }
  EXPECT_EQ(results[0], results[1]);
  EXPECT_EQ(results[1], results[2]);
}

TEST(Submission, SeparatedBlobSingleProbe) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd(0.f, 0.3f);
  std::vector<float> rows;
  for (int i = 0; i < 400; ++i) {
    const float c = i < 200 ? -50.f : 50.f;
    for (int d = 0; d < 4; ++d) rows.push_back(c + nd(rng));
  }
  auto data = std::make_shared<const VectorSet>(VectorSet(4, rows));
  IvfParams ip;
  ip.nlist = 2;
  auto idx = std::make_shared<const IvfIndex>(IvfIndex::build(data, ip));
  TableRegistry reg;
  reg.add_ivf(0, {idx, 1});
  const ClusterId low = idx->select_lists(data->row(0), 1)[0];
  auto q = query_of(idx->centroids().row(low), 10);
  std::vector<float> blob(rows.begin(), rows.begin() + 800);
  auto expect = brute_force_topk(VectorSet(4, blob), q.vector, 10);
  Runtime rt(Topology::synthetic(2, 1), options(StealMode::V2CcdAware));
  rt.start();
  EXPECT_EQ(run_ivf_query(rt, reg, 0, q, 1), expect);
  rt.shutdown();
}

TEST(Registry, Lookups) {
  TableRegistry reg;
  auto d = mixture(50, 4, 1);
  reg.add_hnsw(1, {std::make_shared<const HnswIndex>(HnswIndex::build(d, {})), 16});
  EXPECT_THROW(reg.add_hnsw(1, {}), std::invalid_argument);
  EXPECT_THROW(reg.ivf(1), std::out_of_range);
  EXPECT_TRUE(reg.is_hnsw(1));
  EXPECT_FALSE(reg.contains(2));
}

TEST(Epoch, SwapStressSmall) {
  auto a = stress::epoch_swap_stress(20000, 20);
  EXPECT_EQ(a.submitted, 20000u);
  EXPECT_EQ(a.completed, 20000u);
  EXPECT_EQ(a.missing, 0u);
  EXPECT_EQ(a.duplicates, 0u);
  EXPECT_EQ(a.epoch_mismatches, 0u);
  EXPECT_EQ(a.publishes, 20u);
  EXPECT_EQ(a.early_reclaims, 0u);
}

TEST(MappingIdText, Format) {
  EXPECT_EQ(MappingId::hnsw(7).to_string(), "h7");
  EXPECT_EQ(MappingId::ivf(3, 12).to_string(), "i3:12");
}
