#include "ccdorch/orchestrator.hpp"

#include <algorithm>
#include <limits>

namespace ccdorch {

std::string to_string(StealMode m) {
  switch (m) {
    case StealMode::V0RoundRobin: return "v0";
    case StealMode::V1BlindSteal: return "v1";
    case StealMode::V2CcdAware: return "v2";
  }
  return "?";
}

StealMode parse_steal_mode(const std::string& s) {
  if (s == "v0" || s == "V0") return StealMode::V0RoundRobin;
  if (s == "v1" || s == "V1") return StealMode::V1BlindSteal;
  if (s == "v2" || s == "V2") return StealMode::V2CcdAware;
  throw std::invalid_argument("unknown mode '" + s + "' (expected v0, v1 or v2)");
}

TaskDeque::TaskDeque(std::size_t capacity) : ring_(std::max<std::size_t>(1, capacity)) {}

bool TaskDeque::push(TaskPtr& t) {
  std::lock_guard lock(mu_);
  const std::size_t n = size_.load(std::memory_order_relaxed);
  if (n == ring_.size()) return false;
  ring_[(head_ + n) % ring_.size()] = std::move(t);
  size_.store(n + 1, std::memory_order_release);
  return true;
}

TaskPtr TaskDeque::pop_front() {
  if (size_.load(std::memory_order_acquire) == 0) return nullptr;
  std::lock_guard lock(mu_);
  const std::size_t n = size_.load(std::memory_order_relaxed);
  if (n == 0) return nullptr;
  TaskPtr t = std::move(ring_[head_]);
  head_ = (head_ + 1) % ring_.size();
  size_.store(n - 1, std::memory_order_release);
  return t;
}

TaskPtr TaskDeque::steal_back() {
  if (size_.load(std::memory_order_acquire) == 0) return nullptr;
  std::lock_guard lock(mu_);
  const std::size_t n = size_.load(std::memory_order_relaxed);
  if (n == 0) return nullptr;
  TaskPtr t = std::move(ring_[(head_ + n - 1) % ring_.size()]);
  size_.store(n - 1, std::memory_order_release);
  return t;
}

StealSummary summarize(const std::vector<WorkerStats>& per_worker) {
  StealSummary s;
  for (const auto& w : per_worker) {
    s.executed += w.executed;
    s.steals_intra += w.steals_intra;
    s.steals_cross += w.steals_cross;
  }
  s.cross_ratio = static_cast<double>(s.steals_cross) /
                  static_cast<double>(std::max<std::uint64_t>(1, s.steals_intra + s.steals_cross));
  return s;
}

WorkerGroup::WorkerGroup(const Topology& topology, StealPolicy policy, std::size_t queue_capacity,
                         std::uint64_t seed)
    : topology_(topology),
      neighbors_(neighbor_sets(topology)),
      policy_(policy),
      stats_(topology.core_count()),
      thieves_(topology.core_count()),
      all_others_(topology.core_count()) {
  const auto n = topology_.core_count();
  queues_.reserve(n);
  for (CoreId c = 0; c < n; ++c) {
    queues_.push_back(std::make_unique<TaskDeque>(queue_capacity));
    thieves_[c].rng.seed(seed * 1000003ULL + c);
    for (CoreId o = 0; o < n; ++o) {
      if (o != c) all_others_[c].push_back(o);
    }
  }
}

CoreId WorkerGroup::enqueue_to_ccd(TaskPtr& t, CcdId ccd) {
  const auto& cores = topology_.cores_of(ccd);
  std::vector<std::pair<std::size_t, CoreId>> order;
  order.reserve(cores.size());
  for (CoreId c : cores) order.emplace_back(queues_[c]->size(), c);
  std::sort(order.begin(), order.end());
  // Depths are sampled without a lock; a racing producer may fill the first
  // choice, so fall through to the next shortest before giving up.
  for (const auto& [depth, core] : order) {
    if (queues_[core]->push(t)) return core;
  }
  throw BackpressureError("CCD " + std::to_string(ccd) + ": every core queue is full");
}

CoreId WorkerGroup::enqueue_round_robin(TaskPtr& t) {
  const auto n = queues_.size();
  const auto start = rr_next_.fetch_add(1, std::memory_order_relaxed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto core = static_cast<CoreId>((start + i) % n);
    if (queues_[core]->push(t)) return core;
  }
  throw BackpressureError("every core queue is full");
}

void WorkerGroup::enqueue_shared(TaskPtr& t) {
  std::lock_guard lock(shared_mu_);
  shared_pool_.push_back(std::move(t));
  shared_size_.fetch_add(1, std::memory_order_release);
}

void WorkerGroup::enqueue_to_core(TaskPtr& t, CoreId core) {
  if (!queues_.at(core)->push(t)) throw BackpressureError("core " + std::to_string(core) + ": queue is full");
}

std::size_t WorkerGroup::shared_depth() const { return shared_size_.load(std::memory_order_acquire); }

std::size_t WorkerGroup::queued_total() const {
  std::size_t total = shared_depth();
  for (const auto& q : queues_) total += q->size();
  return total;
}

TaskPtr WorkerGroup::probe(const std::vector<CoreId>& victims, std::size_t start,
                           std::vector<std::pair<CoreId, bool>>* log, CoreId* victim) {
  const std::size_t n = victims.size();
  for (std::size_t i = 0; i < n; ++i) {
    const CoreId v = victims[(start + i) % n];
    TaskPtr t = queues_[v]->steal_back();
    if (log) log->emplace_back(v, t != nullptr);
    if (t) {
      if (victim) *victim = v;
      return t;
    }
  }
  return nullptr;
}

StepOutcome WorkerGroup::step(CoreId core, bool record_probes) {
  StepOutcome out;
  auto& thief = thieves_[core];
  auto& st = stats_[core];

  if ((out.task = queues_[core]->pop_front())) {
    out.source = TaskSource::Local;
    thief.idle_rounds = 0;
    return out;
  }
  out.local_empty = true;

  if (shared_size_.load(std::memory_order_acquire) > 0) {
    std::lock_guard lock(shared_mu_);
    if (!shared_pool_.empty()) {
      out.task = std::move(shared_pool_.front());
      shared_pool_.pop_front();
      shared_size_.fetch_sub(1, std::memory_order_release);
      out.source = TaskSource::SharedPool;
      thief.idle_rounds = 0;
      return out;
    }
  }

  switch (policy_.mode) {
    case StealMode::V0RoundRobin:
      return out;

    case StealMode::V1BlindSteal: {
      const auto& victims = all_others_[core];
      if (victims.empty()) return out;
      const std::size_t start = thief.rng() % victims.size();
      CoreId victim = 0;
      out.task = probe(victims, start, record_probes ? &out.cross_probes : nullptr, &victim);
      if (!out.task) {
        st.steal_attempts_failed.fetch_add(1, std::memory_order_relaxed);
        return out;
      }
      thief.idle_rounds = 0;
      if (topology_.ccd_of(victim) == topology_.ccd_of(core)) {
        out.source = TaskSource::StealIntra;
        st.steals_intra.fetch_add(1, std::memory_order_relaxed);
      } else {
        out.source = TaskSource::StealCross;
        st.steals_cross.fetch_add(1, std::memory_order_relaxed);
      }
      return out;
    }

    case StealMode::V2CcdAware: {
      const auto& intra = neighbors_.intra[core];
      if (!intra.empty()) {
        const std::size_t start = thief.intra_start++ % intra.size();
        out.task = probe(intra, start, record_probes ? &out.intra_probes : nullptr, nullptr);
        if (out.task) {
          out.source = TaskSource::StealIntra;
          st.steals_intra.fetch_add(1, std::memory_order_relaxed);
          thief.idle_rounds = 0;
          return out;
        }
      }
      if (policy_.cross_gate && ++thief.idle_rounds < policy_.cross_gate_rounds) {
        st.steal_attempts_failed.fetch_add(1, std::memory_order_relaxed);
        return out;
      }
      out.task = probe(neighbors_.cross[core], 0, record_probes ? &out.cross_probes : nullptr, nullptr);
      if (out.task) {
        out.source = TaskSource::StealCross;
        st.steals_cross.fetch_add(1, std::memory_order_relaxed);
        thief.idle_rounds = 0;
        return out;
      }
      st.steal_attempts_failed.fetch_add(1, std::memory_order_relaxed);
      return out;
    }
  }

  return out;
}

std::optional<CoreId> WorkerGroup::wake_candidate(CoreId owner, const std::function<bool(CoreId)>& idle) {
  switch (policy_.mode) {
    case StealMode::V0RoundRobin:
      return std::nullopt;
    case StealMode::V1BlindSteal: {
      const auto& others = all_others_[owner];
      if (others.empty()) return std::nullopt;
      const auto start = wake_next_.fetch_add(1, std::memory_order_relaxed);
      for (std::size_t i = 0; i < others.size(); ++i) {
        const CoreId c = others[(start + i) % others.size()];
        if (idle(c)) return c;
      }
      return std::nullopt;
    }
    case StealMode::V2CcdAware:
      for (CoreId c : neighbors_.intra[owner]) {
        if (idle(c)) return c;
      }
      for (CoreId c : neighbors_.cross[owner]) {
        if (idle(c)) return c;
      }
      return std::nullopt;
  }
  return std::nullopt;
}

std::vector<WorkerStats> WorkerGroup::stats() const {
  std::vector<WorkerStats> out(stats_.size());
  for (std::size_t i = 0; i < stats_.size(); ++i) {
    out[i].executed = stats_[i].executed.load(std::memory_order_relaxed);
    out[i].steals_intra = stats_[i].steals_intra.load(std::memory_order_relaxed);
    out[i].steals_cross = stats_[i].steals_cross.load(std::memory_order_relaxed);
    out[i].steal_attempts_failed = stats_[i].steal_attempts_failed.load(std::memory_order_relaxed);
  }
  return out;
}

}  // namespace ccdorch
