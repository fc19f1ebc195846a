#include "ccdorch/submission.hpp"

#include <pthread.h>
#include <sched.h>

#include <iostream>

namespace ccdorch {

std::string MappingId::to_string() const {
  if (kind == IndexKind::Hnsw) return "h" + std::to_string(table);
  return "i" + std::to_string(table) + ":" + std::to_string(cluster);
}

std::size_t MappingIdHash::operator()(const MappingId& id) const noexcept {
  const std::uint64_t x = (std::uint64_t{id.table} << 32) ^ id.cluster ^ (std::uint64_t(id.kind) << 63);
  return std::hash<std::uint64_t>{}(x);
}

CoreId route_task(TaskPtr& t, const Dispatcher& dispatcher, WorkerGroup& workers) {
  switch (workers.policy().mode) {
    case StealMode::V2CcdAware:
      return workers.enqueue_to_ccd(t, dispatcher.pick(t->id, *t->snapshot));
    case StealMode::V1BlindSteal:
      return workers.enqueue_round_robin(t);
    case StealMode::V0RoundRobin:
      if (t->id.kind == IndexKind::Ivf) {
        workers.enqueue_shared(t);
        return static_cast<CoreId>(workers.core_count());
      }
      return workers.enqueue_round_robin(t);
  }
  return 0;
}

TaskResult invoke_task(Task& t) {
  TaskResult r;
  r.seq = t.seq;
  r.stamp_epoch = t.snapshot ? t.snapshot->map.epoch : 0;
  // The task runs under the snapshot it was stamped with; it stays alive
  // (inflight > 0) until finish_task retires it.
  r.exec_epoch = (t.snapshot && t.snapshot->inflight.load(std::memory_order_acquire) > 0)
                     ? t.snapshot->map.epoch
                     : ~std::uint64_t{0};
  try {
    r.output = t.fn(*t.query);
  } catch (...) {
    r.error = std::current_exception();
  }
  return r;
}

void finish_task(Task& t, TaskResult&& result, CoreId core, std::int64_t now_ns, Dispatcher& dispatcher,
                 WorkerGroup& workers) {
  result.core = core;
  result.ccd = dispatcher.topology().ccd_of(core);
  workers.note_executed(core);
  WorkCounters counters = result.error ? WorkCounters{t.id.kind, 0, 0, 0, 0} : result.output.counters;
  dispatcher.monitor().record_completion(core, t.id, counters, now_ns - t.submit_ns);
  if (t.snapshot) {
    Dispatcher::retire(*t.snapshot);
    t.snapshot.reset();
  }
  auto done = std::move(t.complete);
  if (done) done(std::move(result));
}

TaskResult TaskHandle::get() {
  TaskResult r = future_.get();
  if (r.error) std::rethrow_exception(r.error);
  return r;
}

TaskResult TaskHandle::wait_result() { return future_.get(); }

Runtime::Runtime(Topology topology, RuntimeOptions options) : options_(options) {
  const auto cores = topology.core_count();
  dispatcher_ = std::make_unique<Dispatcher>(topology, options_.window, cores);
  workers_ = std::make_unique<WorkerGroup>(topology, options_.policy, options_.queue_capacity, options_.seed);
  for (std::size_t i = 0; i < cores; ++i) parkers_.push_back(std::make_unique<Parker>());
  epoch_start_ = std::chrono::steady_clock::now();
}

Runtime::~Runtime() { shutdown(); }

std::int64_t Runtime::now_us() const {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - epoch_start_)
      .count();
}

void Runtime::start() {
  std::unique_lock lock(intake_mu_);
  if (started_) return;
  started_ = true;
  epoch_start_ = std::chrono::steady_clock::now();
  const auto n = workers_->core_count();
  threads_.reserve(n);
  for (CoreId c = 0; c < n; ++c) threads_.emplace_back([this, c] { worker_main(c); });
  if (options_.auto_windows) monitor_thread_ = std::thread([this] { monitor_main(); });
}

void Runtime::shutdown() {
  {
    std::unique_lock lock(intake_mu_);
    if (!started_ || exit_.load()) return;
    stopping_.store(true);
  }
  // Drain: every accepted task finishes before the workers leave.
  while (pending_.load(std::memory_order_acquire) > 0) {
    std::this_thread::sleep_for(std::chrono::microseconds(50));
  }
  exit_.store(true);
  for (CoreId c = 0; c < parkers_.size(); ++c) signal(c);
  for (auto& t : threads_) t.join();
  threads_.clear();
  if (monitor_thread_.joinable()) monitor_thread_.join();
}

void Runtime::submit_async(SearchFunctor fn, std::shared_ptr<const Query> query, MappingId id,
                           std::function<void(TaskResult&&)> done) {
  std::shared_lock lock(intake_mu_);
  if (!started_ || stopping_.load()) throw ShutdownError();
  auto task = std::make_unique<Task>();
  task->id = id;
  task->query = std::move(query);
  task->fn = std::move(fn);
  task->complete = std::move(done);
  task->seq = next_seq_.fetch_add(1, std::memory_order_relaxed);
  task->submit_ns = now_us() * 1000;
  task->snapshot = dispatcher_->stamp();
  pending_.fetch_add(1, std::memory_order_acq_rel);
  CoreId target = 0;
  try {
    target = route_task(task, *dispatcher_, *workers_);
  } catch (...) {
    pending_.fetch_sub(1, std::memory_order_acq_rel);
    Dispatcher::retire(*task->snapshot);
    throw;
  }
  submitted_.fetch_add(1, std::memory_order_relaxed);
  wake_for(target);
}

TaskHandle Runtime::submit(SearchFunctor fn, std::shared_ptr<const Query> query, MappingId id) {
  auto promise = std::make_shared<std::promise<TaskResult>>();
  TaskHandle handle(promise->get_future());
  submit_async(std::move(fn), std::move(query), id,
               [promise](TaskResult&& r) { promise->set_value(std::move(r)); });
  return handle;
}

void Runtime::signal(CoreId core) {
  auto& p = *parkers_[core];
  {
    std::lock_guard lock(p.mu);
    p.signaled = true;
  }
  p.cv.notify_one();
}

// Wakes the owner if parked, else one idle thief chosen by the policy. The
// shared pool wakes any parked core. Parked workers also time out and re-poll,
// which bounds the cost of a missed signal.
void Runtime::wake_for(CoreId target) {
  auto parked = [this](CoreId c) { return parkers_[c]->parked.load(); };
  if (target >= parkers_.size()) {
    for (CoreId c = 0; c < parkers_.size(); ++c) {
      if (parked(c)) return signal(c);
    }
    return;
  }
  if (parked(target)) return signal(target);
  if (auto thief = workers_->wake_candidate(target, parked)) signal(*thief);
}

void Runtime::worker_main(CoreId core) {
  if (options_.pin_threads && core < std::thread::hardware_concurrency()) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(core, &set);
    pthread_setaffinity_np(pthread_self(), sizeof set, &set);  // best effort
  }
  std::uint32_t idle = 0;
  for (;;) {
    StepOutcome out = workers_->step(core);
    if (out.task) {
      idle = 0;
      TaskResult r = invoke_task(*out.task);
      r.source = out.source;
      finish_task(*out.task, std::move(r), core, now_us() * 1000, *dispatcher_, *workers_);
      out.task.reset();
      pending_.fetch_sub(1, std::memory_order_acq_rel);
      continue;
    }
    if (exit_.load(std::memory_order_acquire)) break;
    if (++idle < options_.spin_rounds) {
      std::this_thread::yield();
      continue;
    }
    auto& p = *parkers_[core];
    std::unique_lock lock(p.mu);
    p.parked.store(true);
    if (workers_->queue_depth(core) == 0) {
      p.cv.wait_for(lock, options_.park_timeout, [&] { return p.signaled || exit_.load(); });
    }
    p.signaled = false;
    p.parked.store(false);
    idle = 0;
  }
}

void Runtime::monitor_main() {
  while (!exit_.load(std::memory_order_acquire)) {
    std::this_thread::sleep_for(options_.monitor_tick);
    dispatcher_->advance_window(now_us());
  }
}

void TableRegistry::add_hnsw(TableId id, HnswTable table) {
  if (contains(id)) throw std::invalid_argument("table " + std::to_string(id) + " already registered");
  hnsw_.emplace(id, std::move(table));
}

void TableRegistry::add_ivf(TableId id, IvfTable table) {
  if (contains(id)) throw std::invalid_argument("table " + std::to_string(id) + " already registered");
  ivf_.emplace(id, std::move(table));
}

const HnswTable& TableRegistry::hnsw(TableId id) const {
  auto it = hnsw_.find(id);
  if (it == hnsw_.end()) throw std::out_of_range("no HNSW table " + std::to_string(id));
  return it->second;
}

const IvfTable& TableRegistry::ivf(TableId id) const {
  auto it = ivf_.find(id);
  if (it == ivf_.end()) throw std::out_of_range("no IVF table " + std::to_string(id));
  return it->second;
}

SearchFunctor make_hnsw_functor(std::shared_ptr<const HnswIndex> index, std::size_t ef_search, bool record_touched) {
  return [index = std::move(index), ef_search, record_touched](const Query& q) {
    auto res = index->search(q.vector, q.k, ef_search, record_touched);
    TaskOutput out;
    out.hits = std::move(res.hits);
    out.counters = {IndexKind::Hnsw, res.nodes_touched, 0, index->vectors().dim(), index->M()};
    out.touched = std::move(res.touched);
    return out;
  };
}

SearchFunctor make_ivf_scan_functor(std::shared_ptr<const IvfIndex> index, ClusterId cluster) {
  return [index = std::move(index), cluster](const Query& q) {
    auto res = index->scan_list(cluster, q.vector, q.k);
    TaskOutput out;
    out.hits = std::move(res.local_hits);
    out.counters = {IndexKind::Ivf, 0, res.scanned, index->vectors().dim(), 0};
    return out;
  };
}

std::vector<Hit> run_hnsw_query(Runtime& rt, const TableRegistry& tables, TableId table, const Query& q) {
  const auto& t = tables.hnsw(table);
  auto query = std::make_shared<const Query>(q);
  return rt.submit(make_hnsw_functor(t.index, t.ef_search), std::move(query), MappingId::hnsw(table)).get().output.hits;
}

std::vector<Hit> run_ivf_query(Runtime& rt, const TableRegistry& tables, TableId table, const Query& q,
                               std::size_t nprobe) {
  const auto& t = tables.ivf(table);
  const auto lists = t.index->select_lists(q.vector, nprobe);
  auto query = std::make_shared<const Query>(q);
  std::vector<TaskHandle> handles;
  handles.reserve(lists.size());
  std::exception_ptr first_error;
  for (ClusterId c : lists) {
    try {
      handles.push_back(rt.submit(make_ivf_scan_functor(t.index, c), query, MappingId::ivf(table, c)));
    } catch (...) {
      first_error = std::current_exception();
      break;
    }
  }
  std::vector<std::vector<Hit>> parts;
  parts.reserve(handles.size());
  for (auto& h : handles) {
    TaskResult r = h.wait_result();
    if (r.error) {
      if (!first_error) first_error = r.error;
      continue;
    }
    parts.push_back(std::move(r.output.hits));
  }
  if (first_error) std::rethrow_exception(first_error);
  return merge_topk(parts, q.k);
}

}  // namespace ccdorch
