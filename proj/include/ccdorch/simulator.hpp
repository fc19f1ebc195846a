#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ccdorch/cache_sim.hpp"
#include "ccdorch/dispatch.hpp"
#include "ccdorch/orchestrator.hpp"
#include "ccdorch/submission.hpp"
#include "ccdorch/workload.hpp"

namespace ccdorch {

// Nominal costs, in simulated nanoseconds.
struct SimCost {
  std::int64_t task_base_ns = 500;
  std::int64_t hit_ns = 4;
  std::int64_t miss_ns = 40;  // also the per-block cost when the cache model is off
  std::int64_t steal_intra_ns = 100;
  std::int64_t steal_cross_ns = 400;
  std::int64_t spin_ns = 20000;    // idle workers spin this long before parking
  std::int64_t poll_ns = 100;      // spinning worker to first poll
  std::int64_t wake_ns = 2000;     // parked worker to first poll
  std::int64_t repoll_ns = 50000;  // idle re-poll while work is queued elsewhere
};

struct SimConfig {
  StealPolicy policy;
  WindowConfig window;  // in simulated microseconds
  bool cache_sim = true;
  std::uint32_t block_bytes = kDefaultBlockBytes;
  std::uint64_t ccd_l3_bytes = kDefaultCcdL3Bytes;
  SimCost cost;
  LoadMode load = LoadMode::ClosedLoop;
  std::uint32_t clients = 64;
  std::uint64_t seed = 1;
  std::size_t queue_capacity = 1 << 16;
  bool record_schedule = false;
  std::function<void(const MapSnapshot&)> on_publish;
};

struct SimRequest {
  TableId table = 0;
  std::shared_ptr<const Query> query;
  std::int64_t arrival_us = 0;  // used in open-loop mode
};

// One task start, in execution order.
struct ScheduleEntry {
  std::int64_t start_ns = 0;
  CoreId core = 0;
  CcdId ccd = 0;
  MappingId id;
  std::uint64_t request = 0;
  TaskSource source = TaskSource::Local;
  WorkCounters counters;
  std::vector<std::uint32_t> touched;
};

struct SimReport {
  std::vector<double> latency_us;  // per request, in request order
  std::vector<std::vector<Hit>> hits;
  StealSummary steals;
  MissRateReport cache;
  bool cache_on = false;
  DispatchStats dispatch;
  std::int64_t makespan_ns = 0;
  std::uint64_t tasks = 0;
  std::vector<ScheduleEntry> schedule;
};

// Deterministic discrete-event run of the scheduler over a simulated
// topology: the real WorkerGroup and Dispatcher drive placement, stealing and
// remapping, search functors run for real, and task durations come from the
// cache model and SimCost.
SimReport simulate(const Topology& topology, const TableRegistry& tables, const std::vector<SimRequest>& requests,
                   const SimConfig& config);

// Re-applies a recorded schedule to a fresh cache model.
MissRateReport replay_schedule(const std::vector<ScheduleEntry>& schedule, std::uint32_t ccds,
                               std::uint64_t ccd_l3_bytes, std::uint32_t block_bytes);

}  // namespace ccdorch
