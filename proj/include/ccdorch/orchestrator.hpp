#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ccdorch/task.hpp"
#include "ccdorch/topology.hpp"

namespace ccdorch {

enum class StealMode : std::uint8_t {
  V0RoundRobin,  // round-robin placement, no stealing; IVF scans pulled from a shared pool
  V1BlindSteal,  // round-robin placement, victims uniform over all other cores
  V2CcdAware,    // mapped-CCD placement, local -> same-CCD -> cross-CCD
};

std::string to_string(StealMode m);
StealMode parse_steal_mode(const std::string& s);

struct StealPolicy {
  StealMode mode = StealMode::V2CcdAware;
  // When set, V2 only probes other CCDs after `cross_gate_rounds`
  // consecutive iterations where local and same-CCD probes all failed.
  bool cross_gate = false;
  std::uint32_t cross_gate_rounds = 64;
};

// Bounded ring deque. Producers append at the back, the owner takes from the
// front (oldest first) and thieves take from the back.
class TaskDeque {
 public:
  explicit TaskDeque(std::size_t capacity);

  // Returns false (leaving `t` untouched) when full.
  bool push(TaskPtr& t);
  TaskPtr pop_front();
  TaskPtr steal_back();
  std::size_t size() const { return size_.load(std::memory_order_acquire); }
  std::size_t capacity() const { return ring_.size(); }

 private:
  mutable std::mutex mu_;
  std::vector<TaskPtr> ring_;
  std::size_t head_ = 0;
  std::atomic<std::size_t> size_{0};
};

// What one workloop iteration saw. Probe lists are filled only when probe
// recording is on.
struct StepOutcome {
  TaskPtr task;
  TaskSource source = TaskSource::Local;
  bool local_empty = false;
  std::vector<std::pair<CoreId, bool>> intra_probes;  // (victim, got a task)
  std::vector<std::pair<CoreId, bool>> cross_probes;
};

struct WorkerStats {
  std::uint64_t executed = 0;
  std::uint64_t steals_intra = 0;
  std::uint64_t steals_cross = 0;
  std::uint64_t steal_attempts_failed = 0;
};

struct StealSummary {
  std::uint64_t executed = 0;
  std::uint64_t steals_intra = 0;
  std::uint64_t steals_cross = 0;
  double cross_ratio = 0.0;
};

StealSummary summarize(const std::vector<WorkerStats>& per_worker);

// Per-core queues plus the stealing workloop step, with no threads of its
// own: the threaded runtime and the simulator both drive it.
class WorkerGroup {
 public:
  WorkerGroup(const Topology& topology, StealPolicy policy, std::size_t queue_capacity, std::uint64_t seed);

  const Topology& topology() const { return topology_; }
  const NeighborSets& neighbors() const { return neighbors_; }
  const StealPolicy& policy() const { return policy_; }
  std::size_t core_count() const { return queues_.size(); }

  // Shortest queue of the CCD, lowest core id on ties. Throws
  // BackpressureError (task left in `t`) when every queue of the CCD is full.
  CoreId enqueue_to_ccd(TaskPtr& t, CcdId ccd);
  // Next core in round-robin order, skipping full queues.
  CoreId enqueue_round_robin(TaskPtr& t);
  // Shared pull pool used by V0 for IVF scans.
  void enqueue_shared(TaskPtr& t);
  // Directly onto one core's queue.
  void enqueue_to_core(TaskPtr& t, CoreId core);

  // One workloop iteration for `core`: local pop, then (per policy) shared
  // pool, same-CCD steal, cross-CCD steal. Does not execute the task.
  StepOutcome step(CoreId core, bool record_probes = false);

  // Idle core to signal when a task lands on busy `owner`'s queue: V2 tries
  // the owner's CCD first, then other CCDs by distance; V1 rotates over all
  // other cores; V0 never wakes a thief. Returns nullopt when none is idle.
  std::optional<CoreId> wake_candidate(CoreId owner, const std::function<bool(CoreId)>& idle);

  void note_executed(CoreId core) { stats_[core].executed.fetch_add(1, std::memory_order_relaxed); }

  std::size_t queue_depth(CoreId core) const { return queues_[core]->size(); }
  std::size_t shared_depth() const;
  std::size_t queued_total() const;

  std::vector<WorkerStats> stats() const;
  StealSummary steal_stats() const { return summarize(stats()); }

 private:
  struct alignas(64) AtomicStats {
    std::atomic<std::uint64_t> executed{0};
    std::atomic<std::uint64_t> steals_intra{0};
    std::atomic<std::uint64_t> steals_cross{0};
    std::atomic<std::uint64_t> steal_attempts_failed{0};
  };
  struct alignas(64) ThiefState {
    std::mt19937_64 rng;
    std::uint32_t intra_start = 0;
    std::uint32_t idle_rounds = 0;
  };

  TaskPtr probe(const std::vector<CoreId>& victims, std::size_t start, std::vector<std::pair<CoreId, bool>>* log,
                CoreId* victim);

  Topology topology_;
  NeighborSets neighbors_;
  StealPolicy policy_;
  std::vector<std::unique_ptr<TaskDeque>> queues_;
  mutable std::mutex shared_mu_;
  std::deque<TaskPtr> shared_pool_;
  std::atomic<std::size_t> shared_size_{0};
  std::atomic<std::uint64_t> rr_next_{0};
  std::atomic<std::uint64_t> wake_next_{0};
  std::vector<AtomicStats> stats_;
  std::vector<ThiefState> thieves_;  // each entry touched only by its own worker
  std::vector<std::vector<CoreId>> all_others_;
};

}  // namespace ccdorch
