#include <gtest/gtest.h>

#include "ccdorch/orchestrator.hpp"
#include "harness.hpp"

using namespace ccdorch;
using harness::dummy_task;

namespace {

StealPolicy mode(StealMode m) {
  StealPolicy p;
  p.mode = m;
  return p;
}

void put(WorkerGroup& wg, CoreId core, std::uint64_t seq = 0) {
  auto t = dummy_task(seq);
  wg.enqueue_to_core(t, core);
}

}  // namespace

TEST(Deque, OwnerFrontThiefBack) {
  TaskDeque q(3);
  for (std::uint64_t i = 0; i < 3; ++i) {
    auto t = dummy_task(i);
    EXPECT_TRUE(q.push(t));
  }
  auto extra = dummy_task(9);
  EXPECT_FALSE(q.push(extra));
  EXPECT_TRUE(extra);
  EXPECT_EQ(q.pop_front()->seq, 0u);
  EXPECT_EQ(q.steal_back()->seq, 2u);
  EXPECT_EQ(q.size(), 1u);
}

TEST(Workloop, LocalFirst) {
  WorkerGroup wg(Topology::synthetic(2, 2), mode(StealMode::V2CcdAware), 8, 1);
  put(wg, 0, 1);
  put(wg, 1, 2);
  auto out = wg.step(0, true);
  ASSERT_TRUE(out.task);
  EXPECT_EQ(out.source, TaskSource::Local);
  EXPECT_TRUE(out.intra_probes.empty());
  EXPECT_TRUE(out.cross_probes.empty());
  auto s = wg.steal_stats();
  EXPECT_EQ(s.steals_intra + s.steals_cross, 0u);
}

TEST(Workloop, IntraBeforeCross) {
  WorkerGroup wg(Topology::synthetic(2, 2), mode(StealMode::V2CcdAware), 8, 1);
  put(wg, 1);
  put(wg, 2);
  auto out = wg.step(0, true);
  ASSERT_TRUE(out.task);
  EXPECT_EQ(out.source, TaskSource::StealIntra);
  EXPECT_EQ(wg.steal_stats().steals_intra, 1u);
  EXPECT_EQ(wg.steal_stats().steals_cross, 0u);
  EXPECT_TRUE(out.cross_probes.empty());
}

TEST(Workloop, CrossAsLastResort) {
  WorkerGroup wg(Topology::synthetic(2, 2), mode(StealMode::V2CcdAware), 8, 1);
  put(wg, 3);
  auto out = wg.step(0, true);
  ASSERT_TRUE(out.task);
  EXPECT_EQ(out.source, TaskSource::StealCross);
  EXPECT_EQ(wg.steal_stats().steals_cross, 1u);
  ASSERT_EQ(out.intra_probes.size(), 1u);
  EXPECT_FALSE(out.intra_probes[0].second);
  auto none = wg.step(0, true);
  EXPECT_FALSE(none.task);
  EXPECT_EQ(wg.stats()[0].steal_attempts_failed, 1u);
}

TEST(Workloop, CrossGateHoldsBackCrossSteals) {
  StealPolicy p = mode(StealMode::V2CcdAware);
  p.cross_gate = true;
  p.cross_gate_rounds = 3;
  WorkerGroup wg(Topology::synthetic(2, 2), p, 8, 1);
  put(wg, 3);
  EXPECT_FALSE(wg.step(0).task);
  EXPECT_FALSE(wg.step(0).task);
  auto out = wg.step(0);
  ASSERT_TRUE(out.task);
  EXPECT_EQ(out.source, TaskSource::StealCross);
}

TEST(Workloop, V0NeverSteals) {
  WorkerGroup wg(Topology::synthetic(2, 2), mode(StealMode::V0RoundRobin), 8, 1);
  put(wg, 1);
  EXPECT_FALSE(wg.step(0).task);
  auto shared = dummy_task(5);
  wg.enqueue_shared(shared);
  auto out = wg.step(2);
  ASSERT_TRUE(out.task);
  EXPECT_EQ(out.source, TaskSource::SharedPool);
  auto s = wg.steal_stats();
  EXPECT_EQ(s.steals_intra, 0u);
  EXPECT_EQ(s.steals_cross, 0u);
  EXPECT_EQ(s.cross_ratio, 0.0);
}

TEST(Workloop, V1ProbesEveryOtherCore) {
  Topology topo = Topology::synthetic(3, 2);
  WorkerGroup wg(topo, mode(StealMode::V1BlindSteal), 8, 7);
  auto out = wg.step(0, true);
  EXPECT_FALSE(out.task);
  EXPECT_EQ(out.cross_probes.size(), 5u);
  std::uint64_t intra = 0, cross = 0;
  for (int i = 0; i < 600; ++i) {
    put(wg, static_cast<CoreId>(1 + i % 5));
    auto o = wg.step(0);
    ASSERT_TRUE(o.task);
    (o.source == TaskSource::StealIntra ? intra : cross)++;
  }
  EXPECT_EQ(intra + cross, 600u);
  EXPECT_GT(cross, intra);
}

TEST(Workloop, HierarchyAuditSmall) {
  auto a = harness::audit_steal_hierarchy(Topology::synthetic(4, 4), 3, 20000);
  EXPECT_GT(a.cross_steals, 0u);
  EXPECT_GT(a.intra_steals, 0u);
  EXPECT_EQ(a.violations, 0u);
  auto g = harness::audit_steal_hierarchy(Topology::synthetic(4, 4), 3, 20000, true);
  EXPECT_EQ(g.violations, 0u);
}

TEST(EnqueueToCcd, ShortestQueue) {
  Topology topo({{0, 1, 2}, {3, 4}});
  WorkerGroup wg(topo, mode(StealMode::V2CcdAware), 4, 1);
  auto t = dummy_task(0);
  EXPECT_EQ(wg.enqueue_to_ccd(t, 0), 0u);
  EXPECT_EQ(wg.enqueue_to_ccd(t = dummy_task(1), 1), 3u);
  for (int i = 0; i < 2; ++i) put(wg, 0);
  put(wg, 2);
  // depths: core0 3, core1 0, core2 1
  EXPECT_EQ(wg.enqueue_to_ccd(t = dummy_task(2), 0), 1u);
  put(wg, 1);
  put(wg, 1);
  // depths: core0 3, core1 3, core2 1
  EXPECT_EQ(wg.enqueue_to_ccd(t = dummy_task(3), 0), 2u);
}

TEST(EnqueueToCcd, SaturatedCcdIsIsolated) {
  Topology topo = Topology::synthetic(2, 2);
  WorkerGroup wg(topo, mode(StealMode::V2CcdAware), 2, 1);
  for (int i = 0; i < 4; ++i) {
    auto t = dummy_task(i);
    wg.enqueue_to_ccd(t, 0);
  }
  auto t = dummy_task(9);
  EXPECT_THROW(wg.enqueue_to_ccd(t, 0), BackpressureError);
  ASSERT_TRUE(t);
  EXPECT_EQ(wg.enqueue_to_ccd(t, 1), 2u);
}

TEST(RoundRobin, CyclesAndSkipsFull) {
  WorkerGroup wg(Topology::synthetic(1, 3), mode(StealMode::V1BlindSteal), 1, 1);
  auto t = dummy_task(0);
  EXPECT_EQ(wg.enqueue_round_robin(t), 0u);
  EXPECT_EQ(wg.enqueue_round_robin(t = dummy_task(1)), 1u);
  EXPECT_EQ(wg.enqueue_round_robin(t = dummy_task(2)), 2u);
  EXPECT_THROW(wg.enqueue_round_robin(t = dummy_task(3)), BackpressureError);
}

TEST(StealStats, Ratio) {
  std::vector<WorkerStats> w(2);
  w[0].steals_intra = 90;
  w[1].steals_cross = 10;
  EXPECT_DOUBLE_EQ(summarize(w).cross_ratio, 0.10);
  EXPECT_EQ(summarize({}).cross_ratio, 0.0);
}

TEST(WakeCandidate, PerPolicy) {
  Topology topo = Topology::synthetic(2, 2);
  auto all_idle = [](CoreId) { return true; };
  auto only3 = [](CoreId c) { return c == 3; };
  WorkerGroup v0(topo, mode(StealMode::V0RoundRobin), 4, 1);
  EXPECT_FALSE(v0.wake_candidate(0, all_idle));
  WorkerGroup v2(topo, mode(StealMode::V2CcdAware), 4, 1);
  EXPECT_EQ(v2.wake_candidate(0, all_idle), 1u);
  EXPECT_EQ(v2.wake_candidate(0, only3), 3u);
  EXPECT_FALSE(v2.wake_candidate(0, [](CoreId) { return false; }));
  WorkerGroup v1(topo, mode(StealMode::V1BlindSteal), 4, 1);
  EXPECT_NE(v1.wake_candidate(0, all_idle), std::optional<CoreId>(0));
}

TEST(StealMode, Parse) {
  EXPECT_EQ(parse_steal_mode("v2"), StealMode::V2CcdAware);
  EXPECT_EQ(to_string(StealMode::V1BlindSteal), "v1");
  EXPECT_THROW(parse_steal_mode("v3"), std::invalid_argument);
}
