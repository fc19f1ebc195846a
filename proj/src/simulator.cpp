#include "ccdorch/simulator.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>

namespace ccdorch {

namespace {

enum class EvKind : std::uint8_t { Arrive, Step, Finish, Window };

struct Event {
  std::int64_t t;
  std::uint64_t seq;
  EvKind kind;
  std::uint64_t arg;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const { return a.t > b.t || (a.t == b.t && a.seq > b.seq); }
};

enum class CoreState : std::uint8_t { Idle, Scheduled, Busy };

struct Running {
  TaskPtr task;
  TaskResult result;
};

struct RequestState {
  std::int64_t arrival_ns = 0;
  std::size_t remaining = 0;
  std::vector<std::vector<Hit>> parts;
  bool failed = false;
};

class Sim {
 public:
  Sim(const Topology& topo, const TableRegistry& tables, const std::vector<SimRequest>& requests, const SimConfig& cfg)
      : topo_(topo),
        tables_(tables),
        requests_(requests),
        cfg_(cfg),
        dispatcher_(topo, cfg.window, topo.core_count()),
        workers_(topo, cfg.policy, cfg.queue_capacity, cfg.seed),
        state_(topo.core_count(), CoreState::Idle),
        idle_since_(topo.core_count(), std::numeric_limits<std::int64_t>::min() / 2),
        running_(topo.core_count()),
        reqs_(requests.size()) {
    if (cfg_.cache_sim) cache_.emplace(LlcModel::from_bytes(topo.ccd_count(), cfg.ccd_l3_bytes, cfg.block_bytes));
    if (cfg_.window.window_us <= 0) throw std::invalid_argument("window length must be positive");
    for (const auto& r : requests_) {
      if (!tables_.contains(r.table)) throw std::invalid_argument("request names unknown table " + std::to_string(r.table));
    }
    report_.latency_us.resize(requests.size());
    report_.hits.resize(requests.size());
    report_.cache_on = cfg_.cache_sim;
    if (cfg_.on_publish) dispatcher_.set_publish_hook(cfg_.on_publish);
  }

  SimReport run() {
    if (requests_.empty()) return finish_report();
    if (cfg_.load == LoadMode::ClosedLoop) {
      const std::size_t c = std::min<std::size_t>(std::max<std::uint32_t>(1, cfg_.clients), requests_.size());
      for (; next_request_ < c; ++next_request_) push(0, EvKind::Arrive, next_request_);
    } else {
      for (std::size_t r = 0; r < requests_.size(); ++r) push(requests_[r].arrival_us * 1000, EvKind::Arrive, r);
      next_request_ = requests_.size();
    }
    push(cfg_.window.window_us * 1000, EvKind::Window, 0);

    while (!q_.empty()) {
      const Event ev = q_.top();
      q_.pop();
      now_ = ev.t;
      switch (ev.kind) {
        case EvKind::Arrive: arrive(ev.arg); break;
        case EvKind::Step: step(static_cast<CoreId>(ev.arg)); break;
        case EvKind::Finish: finish(static_cast<CoreId>(ev.arg)); break;
        case EvKind::Window: window(); break;
      }
    }
    return finish_report();
  }

 private:
  void push(std::int64_t t, EvKind kind, std::uint64_t arg) { q_.push({t, seq_++, kind, arg}); }

  void schedule_step(CoreId c, std::int64_t delay) {
    state_[c] = CoreState::Scheduled;
    push(now_ + delay, EvKind::Step, c);
  }

  std::int64_t wake_delay(CoreId c) const {
    return now_ - idle_since_[c] < cfg_.cost.spin_ns ? cfg_.cost.poll_ns : cfg_.cost.wake_ns;
  }

  void wake(CoreId target) {
    const auto n = static_cast<CoreId>(state_.size());
    if (target >= n) {
      for (CoreId i = 0; i < n; ++i) {
        const CoreId c = static_cast<CoreId>((shared_wake_ + i) % n);
        if (state_[c] == CoreState::Idle) {
          shared_wake_ = c + 1;
          return schedule_step(c, wake_delay(c));
        }
      }
      return;
    }
    if (state_[target] == CoreState::Idle) return schedule_step(target, wake_delay(target));
    if (state_[target] == CoreState::Scheduled) return;
    auto idle = [this](CoreId c) { return state_[c] == CoreState::Idle; };
    if (auto thief = workers_.wake_candidate(target, idle)) schedule_step(*thief, wake_delay(*thief));
  }

  void arrive(std::uint64_t r) {
    const auto& req = requests_[r];
    auto& st = reqs_[r];
    st.arrival_ns = now_;
    const bool want_touched = cfg_.cache_sim || cfg_.record_schedule;

    std::vector<std::pair<MappingId, SearchFunctor>> parts;
    if (tables_.is_hnsw(req.table)) {
      const auto& t = tables_.hnsw(req.table);
      parts.emplace_back(MappingId::hnsw(req.table), make_hnsw_functor(t.index, t.ef_search, want_touched));
    } else {
      const auto& t = tables_.ivf(req.table);
      const auto nprobe = std::min<std::size_t>(t.nprobe, t.index->nlist());
      for (ClusterId c : t.index->select_lists(req.query->vector, nprobe)) {
        parts.emplace_back(MappingId::ivf(req.table, c), make_ivf_scan_functor(t.index, c));
      }
    }
    st.remaining = parts.size();
    st.parts.resize(parts.size());

    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto task = std::make_unique<Task>();
      task->id = parts[i].first;
      task->fn = std::move(parts[i].second);
      task->query = req.query;
      task->seq = task_request_.size();
      task_request_.push_back(r);
      task->submit_ns = now_;
      task->snapshot = dispatcher_.stamp();
      task->complete = [this, r, i](TaskResult&& res) { part_done(r, i, std::move(res)); };
      const CoreId target = route_task(task, dispatcher_, workers_);
      wake(target);
    }
  }

  void step(CoreId c, bool after_task = false) {
    StepOutcome out = workers_.step(c);
    if (!out.task) {
      if (after_task) idle_since_[c] = now_;
      state_[c] = CoreState::Idle;
      if (workers_.queued_total() > 0) schedule_step(c, cfg_.cost.repoll_ns);
      return;
    }
    Task& t = *out.task;
    TaskResult res = invoke_task(t);
    res.source = out.source;
    const CcdId ccd = topo_.ccd_of(c);

    std::int64_t cost = cfg_.cost.task_base_ns;
    if (!res.error) {
      const auto& counters = res.output.counters;
      if (cache_) {
        const auto blocks = task_block_trace(t.id, counters, res.output.touched, cfg_.block_bytes);
        const auto ac = cache_->access(ccd, blocks);
        cost += static_cast<std::int64_t>(ac.hits) * cfg_.cost.hit_ns +
                static_cast<std::int64_t>(ac.misses) * cfg_.cost.miss_ns;
      } else {
        cost += static_cast<std::int64_t>(block_count(counters)) * cfg_.cost.miss_ns;
      }
    }
    if (out.source == TaskSource::StealIntra) cost += cfg_.cost.steal_intra_ns;
    if (out.source == TaskSource::StealCross) cost += cfg_.cost.steal_cross_ns;

    if (cfg_.record_schedule) {
      ScheduleEntry e;
      e.start_ns = now_;
      e.core = c;
      e.ccd = ccd;
      e.id = t.id;
      e.request = task_request_[t.seq];
      e.source = out.source;
      e.counters = res.error ? WorkCounters{t.id.kind, 0, 0, 0, 0} : res.output.counters;
      e.touched = res.output.touched;
      report_.schedule.push_back(std::move(e));
    }
    res.output.touched.clear();
    res.output.touched.shrink_to_fit();

    running_[c] = {std::move(out.task), std::move(res)};
    state_[c] = CoreState::Busy;
    ++report_.tasks;
    push(now_ + cost, EvKind::Finish, c);
  }

  void finish(CoreId c) {
    Running run = std::move(running_[c]);
    finish_task(*run.task, std::move(run.result), c, now_, dispatcher_, workers_);
    state_[c] = CoreState::Scheduled;
    step(c, true);
  }

  void window() {
    dispatcher_.advance_window(now_ / 1000);
    if (completed_ < requests_.size()) push(now_ + cfg_.window.window_us * 1000, EvKind::Window, 0);
  }

  void part_done(std::uint64_t r, std::size_t part, TaskResult&& res) {
    auto& st = reqs_[r];
    if (res.error) {
      st.failed = true;
    } else {
      st.parts[part] = std::move(res.output.hits);
    }
    if (--st.remaining > 0) return;

    report_.latency_us[r] = static_cast<double>(now_ - st.arrival_ns) / 1000.0;
    if (!st.failed) {
      report_.hits[r] = st.parts.size() == 1 ? std::move(st.parts[0]) : merge_topk(st.parts, requests_[r].query->k);
    }
    st.parts.clear();
    st.parts.shrink_to_fit();
    ++completed_;
    report_.makespan_ns = std::max(report_.makespan_ns, now_);
    if (cfg_.load == LoadMode::ClosedLoop && next_request_ < requests_.size()) {
      push(now_, EvKind::Arrive, next_request_++);
    }
  }

  std::uint64_t block_count(const WorkCounters& c) const {
    const std::uint64_t row = std::uint64_t{c.dim} * kElementBytes;
    if (c.kind == IndexKind::Hnsw) {
      return c.nodes_touched *
             (ceil_div(row, cfg_.block_bytes) + ceil_div(std::uint64_t{c.degree} * kIdBytes, cfg_.block_bytes));
    }
    return ceil_div(c.scanned * row, cfg_.block_bytes);
  }


  SimReport finish_report() {
    report_.steals = workers_.steal_stats();
    if (cache_) report_.cache = cache_->miss_rate_report();
    report_.dispatch = dispatcher_.stats();
    return std::move(report_);
  }

  const Topology& topo_;
  const TableRegistry& tables_;
  const std::vector<SimRequest>& requests_;
  const SimConfig& cfg_;
  Dispatcher dispatcher_;
  WorkerGroup workers_;
  std::optional<LlcModel> cache_;
  std::vector<CoreState> state_;
  std::vector<std::int64_t> idle_since_;
  std::vector<Running> running_;
  std::vector<RequestState> reqs_;
  std::priority_queue<Event, std::vector<Event>, Later> q_;
  std::vector<std::uint64_t> task_request_;  // task seq -> request
  std::int64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::size_t next_request_ = 0;
  std::size_t completed_ = 0;
  CoreId shared_wake_ = 0;
  SimReport report_;
};

}  // namespace

SimReport simulate(const Topology& topology, const TableRegistry& tables, const std::vector<SimRequest>& requests,
                   const SimConfig& config) {
  Sim sim(topology, tables, requests, config);
  return sim.run();
}

MissRateReport replay_schedule(const std::vector<ScheduleEntry>& schedule, std::uint32_t ccds,
                               std::uint64_t ccd_l3_bytes, std::uint32_t block_bytes) {
  auto cache = LlcModel::from_bytes(ccds, ccd_l3_bytes, block_bytes);
  for (const auto& e : schedule) {
    const auto blocks = task_block_trace(e.id, e.counters, e.touched, block_bytes);
    cache.access(e.ccd, blocks);
  }
  return cache.miss_rate_report();
}

}  // namespace ccdorch
