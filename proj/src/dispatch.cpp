#include "ccdorch/dispatch.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace ccdorch {

std::uint64_t estimate_hnsw_traffic(std::uint64_t nodes_touched, std::uint32_t dim, std::uint32_t degree) {
  return nodes_touched * (std::uint64_t{dim} * kElementBytes + std::uint64_t{degree} * kIdBytes) + kMetaBytes;
}

std::uint64_t estimate_ivf_traffic(std::uint64_t scanned, std::uint32_t dim) {
  return scanned * std::uint64_t{dim} * kElementBytes;
}

std::uint64_t estimate_traffic(const WorkCounters& c) {
  return c.kind == IndexKind::Hnsw ? estimate_hnsw_traffic(c.nodes_touched, c.dim, c.degree)
                                   : estimate_ivf_traffic(c.scanned, c.dim);
}

CcdMap build_map(const std::vector<TrafficEstimate>& traffic, std::uint32_t m, std::vector<Placement>* trace) {
  if (m == 0) throw std::invalid_argument("build_map: need at least one CCD");
  CcdMap out;
  out.loads.assign(m, 0);
  if (traffic.empty()) return out;

  const std::uint64_t total = std::accumulate(traffic.begin(), traffic.end(), std::uint64_t{0},
                                              [](std::uint64_t s, const TrafficEstimate& t) { return s + t.bytes; });
  out.mu = static_cast<double>(total) / m;

  std::vector<const TrafficEstimate*> order;
  order.reserve(traffic.size());
  for (const auto& t : traffic) {
    order.push_back(&t);
    out.bytes[t.id] = t.bytes;
  }
  std::sort(order.begin(), order.end(), [](const TrafficEstimate* a, const TrafficEstimate* b) {
    return a->bytes > b->bytes || (a->bytes == b->bytes && a->id < b->id);
  });

  auto& L = out.loads;
  std::ptrdiff_t i = 0;
  std::ptrdiff_t j = static_cast<std::ptrdiff_t>(order.size()) - 1;
  while (i <= j) {
    const auto r = static_cast<CcdId>(std::min_element(L.begin(), L.end()) - L.begin());
    const TrafficEstimate* hot = order[i++];
    const double cap = std::max(0.0, out.mu - static_cast<double>(L[r]) - static_cast<double>(hot->bytes));
    Placement p{r, hot->id, std::nullopt, L[r], cap};
    out.assign[hot->id] = r;
    L[r] += hot->bytes;
    if (i <= j && static_cast<double>(order[j]->bytes) <= cap) {
      const TrafficEstimate* cold = order[j--];
      out.assign[cold->id] = r;
      L[r] += cold->bytes;
      p.cold = cold->id;
    }
    if (trace) trace->push_back(p);
  }
  return out;
}

CcdId fallback_ccd(const MappingId& id, std::uint32_t ccd_count) {
  std::uint64_t x = (std::uint64_t{id.table} << 32) ^ id.cluster ^ (std::uint64_t(id.kind) << 63);
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return static_cast<CcdId>(x % ccd_count);
}

CcdId pick_ccd(const MappingId& id, const MapSnapshot& snapshot, const Topology& t) {
  auto it = snapshot.map.assign.find(id);
  if (it != snapshot.map.assign.end() && it->second < t.ccd_count()) return it->second;
  return fallback_ccd(id, t.ccd_count());
}

Monitor::Monitor(std::size_t slots) : slots_(std::max<std::size_t>(1, slots)) {}

void Monitor::record_completion(std::size_t slot, const MappingId& id, const WorkCounters& counters,
                                std::int64_t latency_ns) {
  auto& s = slots_[slot % slots_.size()];
  {
    std::lock_guard lock(s.mu);
    auto& e = s.acc[id];
    e.id = id;
    e.bytes += estimate_traffic(counters);
    e.events += 1;
    e.latency_ns += latency_ns;
  }
  total_records_.fetch_add(1, std::memory_order_relaxed);
}

namespace {

std::vector<TrafficEstimate> collect(std::vector<std::unordered_map<MappingId, TrafficEstimate, MappingIdHash>> parts) {
  std::map<MappingId, TrafficEstimate> merged;
  for (auto& part : parts) {
    for (auto& [id, e] : part) {
      auto& m = merged[id];
      m.id = id;
      m.bytes += e.bytes;
      m.events += e.events;
      m.latency_ns += e.latency_ns;
    }
  }
  std::vector<TrafficEstimate> out;
  out.reserve(merged.size());
  for (auto& [id, e] : merged) out.push_back(e);
  return out;
}

}  // namespace

std::vector<TrafficEstimate> Monitor::window_report() const {
  std::vector<std::unordered_map<MappingId, TrafficEstimate, MappingIdHash>> parts;
  for (const auto& s : slots_) {
    std::lock_guard lock(s.mu);
    parts.push_back(s.acc);
  }
  return collect(std::move(parts));
}

std::vector<TrafficEstimate> Monitor::drain() {
  std::vector<std::unordered_map<MappingId, TrafficEstimate, MappingIdHash>> parts;
  for (auto& s : slots_) {
    std::lock_guard lock(s.mu);
    parts.push_back(std::exchange(s.acc, {}));
  }
  return collect(std::move(parts));
}

struct Dispatcher::Shared {
  std::mutex mu;
  DispatchStats stats;
  std::function<void(std::uint64_t, std::int64_t)> hook;
  std::function<void(const MapSnapshot&)> on_publish;
};

Dispatcher::Dispatcher(Topology topology, WindowConfig window, std::size_t monitor_slots)
    : topology_(std::move(topology)), window_(window), monitor_(monitor_slots), shared_(std::make_shared<Shared>()) {
  if (window_.window_us <= 0) throw std::invalid_argument("WindowConfig: window length must be positive");
  CcdMap initial;
  initial.loads.assign(topology_.ccd_count(), 0);
  current_ = make_snapshot(std::move(initial));
}

Dispatcher::~Dispatcher() = default;

std::shared_ptr<const MapSnapshot> Dispatcher::make_snapshot(CcdMap map) {
  map.epoch = next_epoch_++;
  auto shared = shared_;
  auto* raw = new MapSnapshot{std::move(map), {}};
  return std::shared_ptr<const MapSnapshot>(raw, [shared](const MapSnapshot* s) {
    const auto inflight = s->inflight.load(std::memory_order_acquire);
    std::function<void(std::uint64_t, std::int64_t)> hook;
    {
      std::lock_guard lock(shared->mu);
      ++shared->stats.snapshots_reclaimed;
      if (inflight != 0) ++shared->stats.reclaim_violations;
      hook = shared->hook;
    }
    if (hook) hook(s->map.epoch, inflight);
    delete s;
  });
}

std::shared_ptr<const MapSnapshot> Dispatcher::current() const {
  std::lock_guard lock(publish_mu_);
  return current_;
}

std::shared_ptr<const MapSnapshot> Dispatcher::stamp() const {
  std::lock_guard lock(publish_mu_);
  current_->inflight.fetch_add(1, std::memory_order_acq_rel);
  return current_;
}

std::shared_ptr<const MapSnapshot> Dispatcher::publish(CcdMap map) {
  std::shared_ptr<const MapSnapshot> next;
  {
    std::lock_guard wlock(window_mu_);
    next = make_snapshot(std::move(map));
  }
  std::shared_ptr<const MapSnapshot> old;
  {
    std::lock_guard lock(publish_mu_);
    old = std::exchange(current_, next);
  }
  std::function<void(const MapSnapshot&)> on_publish;
  {
    std::lock_guard lock(shared_->mu);
    ++shared_->stats.epochs_published;
    on_publish = shared_->on_publish;
  }
  if (on_publish) on_publish(*next);
  // `old` is released here; in-flight tasks still hold their own references.
  return next;
}

std::optional<std::shared_ptr<const MapSnapshot>> Dispatcher::advance_window(std::int64_t now_us, bool force) {
  std::vector<TrafficEstimate> report;
  {
    std::lock_guard lock(window_mu_);
    if (!force && now_us - window_start_us_ < window_.window_us) return std::nullopt;
    window_start_us_ = now_us;
    report = monitor_.drain();
  }
  std::uint64_t events = 0;
  for (const auto& e : report) events += e.events;
  if (events < window_.min_events || report.empty()) {
    std::lock_guard lock(shared_->mu);
    ++shared_->stats.windows_skipped;
    return std::nullopt;
  }
  // Built off the serving path: readers keep using the current snapshot meanwhile.
  CcdMap next = build_map(report, topology_.ccd_count());
  for (const auto& [id, ccd] : current()->map.assign) next.assign.emplace(id, ccd);
  return publish(std::move(next));
}

void Dispatcher::set_reclaim_hook(std::function<void(std::uint64_t, std::int64_t)> hook) {
  std::lock_guard lock(shared_->mu);
  shared_->hook = std::move(hook);
}

void Dispatcher::set_publish_hook(std::function<void(const MapSnapshot&)> hook) {
  std::lock_guard lock(shared_->mu);
  shared_->on_publish = std::move(hook);
}

DispatchStats Dispatcher::stats() const {
  std::lock_guard lock(shared_->mu);
  return shared_->stats;
}

}  // namespace ccdorch
