#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ccdorch/task.hpp"
#include "ccdorch/topology.hpp"

namespace ccdorch {

// Bytes per stored neighbor id in HNSW adjacency lists.
inline constexpr std::uint64_t kIdBytes = 4;
// Heap/visited-list term of the HNSW estimate; kept at zero.
inline constexpr std::uint64_t kMetaBytes = 0;

// N * (D*4 + M*4) + meta.
std::uint64_t estimate_hnsw_traffic(std::uint64_t nodes_touched, std::uint32_t dim, std::uint32_t degree);
// S * D*4 for one probed list.
std::uint64_t estimate_ivf_traffic(std::uint64_t scanned, std::uint32_t dim);
std::uint64_t estimate_traffic(const WorkCounters& c);

struct TrafficEstimate {
  MappingId id;
  std::uint64_t bytes = 0;
  std::uint64_t events = 0;
  std::int64_t latency_ns = 0;  // summed submit-to-completion time; not used by remapping

  bool operator==(const TrafficEstimate&) const = default;
};

struct CcdMap {
  std::uint64_t epoch = 0;
  std::map<MappingId, CcdId> assign;
  std::vector<std::uint64_t> loads;  // bytes placed per CCD
  std::map<MappingId, std::uint64_t> bytes;  // window traffic of each id placed by this map
  double mu = 0.0;                   // target per-CCD load
};

// One loop iteration of the balanced hot-cold sweep: `hot` placed on `ccd`,
// optionally with `cold` when it fit the residual capacity.
struct Placement {
  CcdId ccd = 0;
  MappingId hot;
  std::optional<MappingId> cold;
  std::uint64_t load_before = 0;
  double cap = 0.0;
};

// Balanced hot-cold pairing. Least-loaded ties go to the lowest CCD id;
// equal traffic sorts by ascending MappingId.
CcdMap build_map(const std::vector<TrafficEstimate>& traffic, std::uint32_t m,
                 std::vector<Placement>* trace = nullptr);

// Published mapping plus the count of tasks stamped with it and still running.
struct MapSnapshot {
  CcdMap map;
  mutable std::atomic<std::int64_t> inflight{0};
};

// Stable cold-start CCD for ids absent from the snapshot.
CcdId fallback_ccd(const MappingId& id, std::uint32_t ccd_count);

CcdId pick_ccd(const MappingId& id, const MapSnapshot& snapshot, const Topology& t);

struct WindowConfig {
  std::int64_t window_us = 10'000'000;
  std::uint64_t min_events = 1;
};

// Per-slot (per-worker) traffic accumulation, aggregated at window boundaries.
class Monitor {
 public:
  explicit Monitor(std::size_t slots);

  void record_completion(std::size_t slot, const MappingId& id, const WorkCounters& counters,
                         std::int64_t latency_ns = 0);

  // Aggregated per-id totals for the open window, sorted by id.
  std::vector<TrafficEstimate> window_report() const;
  // Same as window_report but also clears the accumulators.
  std::vector<TrafficEstimate> drain();

  std::uint64_t total_records() const { return total_records_.load(std::memory_order_relaxed); }

 private:
  struct alignas(64) Slot {
    mutable std::mutex mu;
    std::unordered_map<MappingId, TrafficEstimate, MappingIdHash> acc;
  };
  std::vector<Slot> slots_;
  std::atomic<std::uint64_t> total_records_{0};
};

struct DispatchStats {
  std::uint64_t epochs_published = 0;
  std::uint64_t windows_skipped = 0;
  std::uint64_t snapshots_reclaimed = 0;
  // Snapshots destroyed while tasks stamped with them were still running.
  std::uint64_t reclaim_violations = 0;
};

// Owns the epoched MappingId->CCD snapshot and the workload monitor.
class Dispatcher {
 public:
  Dispatcher(Topology topology, WindowConfig window, std::size_t monitor_slots);
  ~Dispatcher();
  Dispatcher(const Dispatcher&) = delete;
  Dispatcher& operator=(const Dispatcher&) = delete;

  const Topology& topology() const { return topology_; }
  Monitor& monitor() { return monitor_; }
  const Monitor& monitor() const { return monitor_; }

  std::shared_ptr<const MapSnapshot> current() const;
  // Current snapshot with its in-flight count raised; pair with retire().
  std::shared_ptr<const MapSnapshot> stamp() const;
  static void retire(const MapSnapshot& s) { s.inflight.fetch_sub(1, std::memory_order_acq_rel); }

  CcdId pick(const MappingId& id, const MapSnapshot& s) const { return pick_ccd(id, s, topology_); }

  // Closes the window when it has elapsed (or `force`), builds the next map
  // from its traffic and publishes it. Ids absent from the window keep their
  // previous CCD. Returns the published snapshot, or nullopt when the window
  // is still open or had fewer than min_events completions.
  std::optional<std::shared_ptr<const MapSnapshot>> advance_window(std::int64_t now_us, bool force = false);

  // Publishes a caller-built map as the next epoch (tests and forced layouts).
  std::shared_ptr<const MapSnapshot> publish(CcdMap map);

  // Called with each snapshot right after it becomes current.
  void set_publish_hook(std::function<void(const MapSnapshot&)> hook);

  // Called with the epoch of each snapshot as it is destroyed.
  void set_reclaim_hook(std::function<void(std::uint64_t epoch, std::int64_t inflight_at_reclaim)> hook);

  DispatchStats stats() const;

 private:
  struct Shared;
  std::shared_ptr<const MapSnapshot> make_snapshot(CcdMap map);

  Topology topology_;
  WindowConfig window_;
  Monitor monitor_;
  mutable std::mutex publish_mu_;
  std::shared_ptr<const MapSnapshot> current_;
  std::mutex window_mu_;
  std::int64_t window_start_us_ = 0;  // windows are measured from t = 0
  std::uint64_t next_epoch_ = 0;
  std::shared_ptr<Shared> shared_;
};

}  // namespace ccdorch
