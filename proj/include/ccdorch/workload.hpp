#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ccdorch/submission.hpp"
#include "ccdorch/task.hpp"
#include "ccdorch/vector_core.hpp"

namespace ccdorch {

// w_i proportional to i^-s over ranks 1..n, normalized.
std::vector<double> zipf_weights(std::size_t n, double s);

struct TableSpec {
  IndexKind kind = IndexKind::Hnsw;
  std::uint32_t rows = 1000;
  std::uint32_t dim = 32;
  // HNSW
  std::uint32_t M = 32;
  std::uint32_t ef_construction = 500;
  std::uint32_t ef_search = 64;
  // IVF; nlist 0 picks default_nlist(rows)
  std::uint32_t nlist = 0;
  std::uint32_t nprobe = 8;

  bool operator==(const TableSpec&) const = default;
};

struct TraceSpec {
  std::vector<TableSpec> tables;
  double skew_s = 1.0;
  std::int64_t rotation_period_us = 0;  // 0 disables rotation
  double rotation_fraction = 0.0;       // share of ranks re-drawn each period
  std::uint64_t requests = 10000;
  double qps = 10000.0;  // Poisson arrival rate used for timestamps
  std::uint32_t clients = 0;  // suggested closed-loop concurrency, 0 = unset
  std::uint32_t k = 10;
  double hotspot_s = 1.0;     // Zipf exponent over each table's rows
  float query_noise = 0.05f;  // stddev of the perturbation around the hotspot row
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 7;

  bool operator==(const TraceSpec&) const = default;
};

struct TraceEvent {
  std::int64_t ts_us = 0;
  TableId table = 0;
  std::uint32_t k = 10;
  std::uint32_t row = 0;     // stored row the query is drawn around
  std::uint64_t qseed = 0;   // seeds the perturbation

  bool operator==(const TraceEvent&) const = default;
};

struct Trace {
  TraceSpec spec;
  std::vector<TraceEvent> events;

  bool operator==(const Trace&) const = default;
};

Trace generate_trace(const TraceSpec& spec);

// Sidecar header path for a JSONL trace file.
std::string trace_header_path(const std::string& trace_path);
std::string serialize_header(const TraceSpec& spec);
std::string serialize_events(const std::vector<TraceEvent>& events);
void write_trace(const Trace& trace, const std::string& path);
Trace read_trace(const std::string& path);
TraceSpec parse_header(const std::string& json_text);
// FNV-1a over the serialized header and events, as 16 hex digits.
std::string trace_digest(const Trace& trace);

// Dataset backing table `table` of `spec` (seeded from data_seed and the id).
VectorSet table_dataset(const TraceSpec& spec, TableId table);
Query materialize_query(const VectorSet& data, const TraceEvent& ev, float noise);

enum class LoadMode : std::uint8_t { OpenLoop, ClosedLoop };

struct LatencyRecord {
  std::uint64_t request = 0;
  std::int64_t arrival_us = 0;
  std::int64_t completion_us = 0;
  std::vector<Hit> hits;
  bool ok = true;
};

struct ReplayOptions {
  LoadMode mode = LoadMode::ClosedLoop;
  std::uint32_t clients = 1;
};

// Replays `events` (with pre-materialized `queries`) against a started
// runtime. Fails before issuing anything if the trace names a table that is
// not registered. Records are returned in request order.
std::vector<LatencyRecord> replay(const std::vector<TraceEvent>& events,
                                  const std::vector<std::shared_ptr<const Query>>& queries, Runtime& rt,
                                  const TableRegistry& tables, const ReplayOptions& options);

}  // namespace ccdorch
