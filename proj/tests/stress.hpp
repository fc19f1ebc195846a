#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "ccdorch/submission.hpp"

namespace stress {

struct EpochAudit {
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t missing = 0;
  std::uint64_t epoch_mismatches = 0;
  std::uint64_t publishes = 0;
  std::uint64_t reclaimed = 0;
  std::uint64_t early_reclaims = 0;  // hook saw in-flight tasks at reclaim
  double seconds = 0.0;
};

// Submitter threads race a publisher that swaps in random maps; every
// completion is counted per task and checked against its stamp.
inline EpochAudit epoch_swap_stress(std::uint64_t submits, std::uint64_t publishes, std::uint32_t submitters = 3) {
  using namespace ccdorch;
  const auto start = std::chrono::steady_clock::now();
  RuntimeOptions opt;
  opt.policy.mode = StealMode::V2CcdAware;
  opt.auto_windows = false;
  opt.queue_capacity = 1 << 14;
  opt.spin_rounds = 16;
  opt.park_timeout = std::chrono::microseconds(100);
  EpochAudit a;
  std::atomic<std::uint64_t> reclaimed{0}, early{0};  // outlive rt, whose teardown reclaims the last map
  Runtime rt(Topology::synthetic(2, 2), opt);
  rt.dispatcher().set_reclaim_hook([&](std::uint64_t, std::int64_t inflight) {
    reclaimed.fetch_add(1);
    if (inflight != 0) early.fetch_add(1);
  });
  rt.start();

  std::vector<std::atomic<std::uint32_t>> hits(submits);
  std::atomic<std::uint64_t> mismatches{0}, next{0}, done{0};
  auto query = std::make_shared<const Query>();
  SearchFunctor fn = [](const Query&) {
    TaskOutput o;
    o.counters = {IndexKind::Hnsw, 3, 0, 8, 4};
    return o;
  };

  std::vector<std::thread> threads;
  for (std::uint32_t s = 0; s < submitters; ++s) {
    threads.emplace_back([&, s] {
      for (;;) {
        const auto i = next.fetch_add(1);
        if (i >= submits) return;
        const auto id = MappingId::hnsw(static_cast<TableId>((i * 7 + s) % 32));
        auto cb = [&, i](TaskResult&& r) {
          if (r.exec_epoch != r.stamp_epoch) mismatches.fetch_add(1);
          hits[i].fetch_add(1);
          done.fetch_add(1);
        };
        for (;;) {
          try {
            rt.submit_async(fn, query, id, cb);
            break;
          } catch (const BackpressureError&) {
            std::this_thread::yield();
          }
        }
      }
    });
  }
  std::thread publisher([&] {
    std::mt19937_64 rng(9);
    for (std::uint64_t p = 0; p < publishes; ++p) {
      const auto target = (p + 1) * submits / (publishes + 1);
      while (next.load() < target) std::this_thread::yield();
      CcdMap m;
      m.loads.assign(2, 0);
      for (TableId t = 0; t < 32; ++t) m.assign[MappingId::hnsw(t)] = static_cast<CcdId>(rng() % 2);
      rt.dispatcher().publish(std::move(m));
    }
  });
  for (auto& t : threads) t.join();
  publisher.join();
  rt.shutdown();

  a.submitted = rt.submitted();
  a.completed = done.load();
  for (auto& h : hits) {
    const auto n = h.load();
    if (n == 0) ++a.missing;
    if (n > 1) a.duplicates += n - 1;
  }
  a.epoch_mismatches = mismatches.load();
  a.publishes = rt.dispatcher().stats().epochs_published;
  a.reclaimed = reclaimed.load();
  a.early_reclaims = early.load() + rt.dispatcher().stats().reclaim_violations;
  a.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return a;
}

}  // namespace stress
