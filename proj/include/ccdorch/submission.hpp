#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <shared_mutex>
#include <thread>
#include <vector>

#include "ccdorch/dispatch.hpp"
#include "ccdorch/index_hnsw.hpp"
#include "ccdorch/index_ivf.hpp"
#include "ccdorch/orchestrator.hpp"
#include "ccdorch/task.hpp"

namespace ccdorch {

// Places a stamped task according to the policy: V2 resolves the CCD through
// the dispatcher snapshot, V1 uses round-robin, V0 round-robin for HNSW and
// the shared pool for IVF scans. Returns the chosen core (or the core count
// for the shared pool). Throws BackpressureError with the task left in `t`.
CoreId route_task(TaskPtr& t, const Dispatcher& dispatcher, WorkerGroup& workers);

// Runs the functor, capturing any exception into the result.
TaskResult invoke_task(Task& t);

// Delivers a finished task: one monitor record, epoch retirement, then the
// completion callback. Must be called exactly once per routed task. `now_ns`
// is on the same clock as the task's submit_ns.
void finish_task(Task& t, TaskResult&& result, CoreId core, std::int64_t now_ns, Dispatcher& dispatcher,
                 WorkerGroup& workers);

class TaskHandle {
 public:
  TaskHandle() = default;
  explicit TaskHandle(std::future<TaskResult> f) : future_(std::move(f)) {}

  // Blocks until done; rethrows the task's error.
  TaskResult get();
  // Blocks until done; returns the result with any error left in `error`.
  TaskResult wait_result();
  bool valid() const { return future_.valid(); }

 private:
  std::future<TaskResult> future_;
};

struct RuntimeOptions {
  StealPolicy policy;
  std::size_t queue_capacity = 4096;
  WindowConfig window;
  // Run a monitor thread that closes windows on the wall clock.
  bool auto_windows = true;
  std::chrono::microseconds monitor_tick{1000};
  // Pin worker i to OS cpu i (skipped when the core id exceeds the host's CPUs).
  bool pin_threads = false;
  std::uint32_t spin_rounds = 64;
  std::chrono::microseconds park_timeout{200};
  std::uint64_t seed = 1;
};

// Threaded runtime: one worker per topology core running the stealing
// workloop, plus an optional window/monitor thread.
class Runtime {
 public:
  Runtime(Topology topology, RuntimeOptions options);
  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  void start();
  // Two-phase: reject new submissions, drain every queued task, join.
  void shutdown();
  bool running() const { return started_ && !stopping_.load(); }

  TaskHandle submit(SearchFunctor fn, std::shared_ptr<const Query> query, MappingId id);
  // Callback flavour; the callback runs on the executing worker.
  void submit_async(SearchFunctor fn, std::shared_ptr<const Query> query, MappingId id,
                    std::function<void(TaskResult&&)> done);

  Dispatcher& dispatcher() { return *dispatcher_; }
  WorkerGroup& workers() { return *workers_; }
  const Topology& topology() const { return dispatcher_->topology(); }
  StealSummary steal_stats() const { return workers_->steal_stats(); }
  std::int64_t now_us() const;
  std::uint64_t submitted() const { return submitted_.load(); }

 private:
  void worker_main(CoreId core);
  void monitor_main();
  void wake_for(CoreId target);
  void signal(CoreId core);

  RuntimeOptions options_;
  std::unique_ptr<Dispatcher> dispatcher_;
  std::unique_ptr<WorkerGroup> workers_;
  std::vector<std::thread> threads_;
  std::thread monitor_thread_;
  std::chrono::steady_clock::time_point epoch_start_;

  std::shared_mutex intake_mu_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> exit_{false};
  bool started_ = false;
  std::atomic<std::int64_t> pending_{0};
  std::atomic<std::uint64_t> submitted_{0};
  std::atomic<std::uint64_t> next_seq_{0};

  struct Parker {
    std::mutex mu;
    std::condition_variable cv;
    bool signaled = false;
    std::atomic<bool> parked{false};
  };
  std::vector<std::unique_ptr<Parker>> parkers_;
};

struct HnswTable {
  std::shared_ptr<const HnswIndex> index;
  std::size_t ef_search = 64;
};

struct IvfTable {
  std::shared_ptr<const IvfIndex> index;
  std::size_t nprobe = 8;
};

class TableRegistry {
 public:
  void add_hnsw(TableId id, HnswTable table);
  void add_ivf(TableId id, IvfTable table);
  bool contains(TableId id) const { return hnsw_.count(id) || ivf_.count(id); }
  const HnswTable& hnsw(TableId id) const;
  const IvfTable& ivf(TableId id) const;
  bool is_hnsw(TableId id) const { return hnsw_.count(id) != 0; }
  bool is_ivf(TableId id) const { return ivf_.count(id) != 0; }

 private:
  std::map<TableId, HnswTable> hnsw_;
  std::map<TableId, IvfTable> ivf_;
};

// Whole-table HNSW search as a functor; `record_touched` keeps the visited
// node list for the cache model.
SearchFunctor make_hnsw_functor(std::shared_ptr<const HnswIndex> index, std::size_t ef_search,
                                bool record_touched = false);
// One IVF list scan as a functor.
SearchFunctor make_ivf_scan_functor(std::shared_ptr<const IvfIndex> index, ClusterId cluster);

// One task on the table's CCD; returns the final top-k.
std::vector<Hit> run_hnsw_query(Runtime& rt, const TableRegistry& tables, TableId table, const Query& q);

// Selects lists on the calling thread, submits one scan per list, waits for
// all of them and merges. The first scan error is rethrown after every
// submitted scan has completed.
std::vector<Hit> run_ivf_query(Runtime& rt, const TableRegistry& tables, TableId table, const Query& q,
                               std::size_t nprobe);

}  // namespace ccdorch
