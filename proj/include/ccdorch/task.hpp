#pragma once

#include <compare>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccdorch/topology.hpp"
#include "ccdorch/vector_core.hpp"

namespace ccdorch {

enum class IndexKind : std::uint8_t { Hnsw, Ivf };

using TableId = std::uint32_t;

// Dispatch key: a whole HNSW table or one (table, cluster) list of an IVF table.
struct MappingId {
  IndexKind kind = IndexKind::Hnsw;
  TableId table = 0;
  std::uint32_t cluster = 0;  // 0 for HNSW tables

  static MappingId hnsw(TableId t) { return {IndexKind::Hnsw, t, 0}; }
  static MappingId ivf(TableId t, std::uint32_t c) { return {IndexKind::Ivf, t, c}; }

  auto operator<=>(const MappingId&) const = default;
  bool operator==(const MappingId&) const = default;

  // "h7" for HNSW table 7, "i3:12" for cluster 12 of IVF table 3.
  std::string to_string() const;
};

struct MappingIdHash {
  std::size_t operator()(const MappingId& id) const noexcept;
};

struct Query {
  std::vector<float> vector;
  std::uint32_t k = 10;
  std::optional<std::string> filter;  // carried, never interpreted
  std::string client;
  std::int64_t arrival_us = 0;
};

// Work reported by a search functor; drives the traffic estimate.
struct WorkCounters {
  IndexKind kind = IndexKind::Hnsw;
  std::uint64_t nodes_touched = 0;  // HNSW: distinct nodes read
  std::uint64_t scanned = 0;        // IVF: vectors scanned in the list
  std::uint32_t dim = 0;
  std::uint32_t degree = 0;  // HNSW M

  bool operator==(const WorkCounters&) const = default;
};

struct TaskOutput {
  std::vector<Hit> hits;
  WorkCounters counters;
  std::vector<std::uint32_t> touched;  // HNSW node ids, when instrumented
};

using SearchFunctor = std::function<TaskOutput(const Query&)>;

enum class TaskSource : std::uint8_t { Local, SharedPool, StealIntra, StealCross };

struct TaskResult {
  std::exception_ptr error;  // set instead of output on failure
  TaskOutput output;
  CoreId core = 0;
  CcdId ccd = 0;
  std::uint64_t stamp_epoch = 0;
  std::uint64_t exec_epoch = 0;
  TaskSource source = TaskSource::Local;
  std::uint64_t seq = 0;
};

struct MapSnapshot;

struct Task {
  MappingId id;
  std::shared_ptr<const Query> query;
  SearchFunctor fn;
  std::shared_ptr<const MapSnapshot> snapshot;  // epoch stamp taken at submit
  std::uint64_t seq = 0;
  std::int64_t submit_ns = 0;
  std::function<void(TaskResult&&)> complete;
};

using TaskPtr = std::unique_ptr<Task>;

class ShutdownError : public std::runtime_error {
 public:
  ShutdownError() : std::runtime_error("runtime is shut down") {}
};

class BackpressureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccdorch
