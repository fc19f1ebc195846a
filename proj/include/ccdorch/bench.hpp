#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ccdorch/simulator.hpp"
#include "ccdorch/submission.hpp"
#include "ccdorch/workload.hpp"

namespace ccdorch {

// Datasets and indexes for every table of a trace header.
struct Workbench {
  TraceSpec spec;
  std::vector<std::shared_ptr<const VectorSet>> data;
  TableRegistry tables;

  static Workbench build(const TraceSpec& spec);
  std::vector<std::shared_ptr<const Query>> queries(const Trace& trace) const;
};

enum class RunKind : std::uint8_t { Sim, WallClock };

struct RunConfig {
  std::string topology = "sim:12x8";
  StealPolicy policy;
  RunKind run = RunKind::Sim;
  LoadMode load = LoadMode::ClosedLoop;
  std::uint32_t clients = 64;
  WindowConfig window;
  bool cache_sim = true;  // sim runs only
  std::uint32_t block_bytes = kDefaultBlockBytes;
  std::uint64_t ccd_l3_bytes = kDefaultCcdL3Bytes;
  SimCost cost;
  std::size_t recall_sample = 50;
  std::uint64_t seed = 1;
  std::string dump_maps;  // CSV path for per-epoch maps, empty = off
};

struct RunReport {
  std::string mode;
  std::string topology;
  std::string run = "sim";
  std::uint64_t requests = 0;
  double qps = 0.0;
  double p50_us = 0.0;
  double p999_us = 0.0;
  StealSummary steals;
  bool cache_on = false;
  CacheStats llc;
  double recall_sample = 0.0;
  std::uint64_t epochs_published = 0;
  std::string trace_digest;
  bool complete = true;
  std::vector<std::vector<Hit>> hits;  // per request; not written to CSV
};

// Nearest-rank: the value at rank ceil(p*n) of the sorted input.
double percentile(std::vector<double> values, double p);

RunReport run_benchmark(const RunConfig& cfg, const Workbench& bench, const Trace& trace);

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string csv_row(const RunReport& r);
// Writes to a temporary file and renames it over `path`.
void write_csv_atomic(const std::string& path, const std::string& content);
std::string reports_csv(const std::vector<RunReport>& reports);
std::vector<RunReport> read_reports_csv(const std::string& path);

// One row per metric: each report's value, then each later report's relative
// delta against the first. Throws on fewer than two reports or on reports
// from different traces.
std::string compare_runs(const std::vector<RunReport>& reports);

}  // namespace ccdorch
