#include "ccdorch/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace ccdorch {

Workbench Workbench::build(const TraceSpec& spec) {
  Workbench wb;
  wb.spec = spec;
  for (TableId t = 0; t < spec.tables.size(); ++t) {
    const auto& ts = spec.tables[t];
    auto data = std::make_shared<const VectorSet>(table_dataset(spec, t));
    wb.data.push_back(data);
    if (ts.kind == IndexKind::Hnsw) {
      HnswParams p;
      p.M = ts.M;
      p.ef_construction = ts.ef_construction;
      p.seed = spec.data_seed * 31 + t;
      auto idx = std::make_shared<const HnswIndex>(HnswIndex::build(data, p));
      wb.tables.add_hnsw(t, {idx, std::max<std::size_t>(ts.ef_search, spec.k)});
    } else {
      IvfParams p;
      p.nlist = ts.nlist ? ts.nlist : default_nlist(ts.rows);
      p.seed = spec.data_seed * 31 + t;
      auto idx = std::make_shared<const IvfIndex>(IvfIndex::build(data, p));
      wb.tables.add_ivf(t, {idx, std::clamp<std::size_t>(ts.nprobe, 1, p.nlist)});
    }
  }
  return wb;
}

std::vector<std::shared_ptr<const Query>> Workbench::queries(const Trace& trace) const {
  std::vector<std::shared_ptr<const Query>> out;
  out.reserve(trace.events.size());
  for (const auto& ev : trace.events) {
    if (ev.table >= data.size()) throw std::invalid_argument("trace references unknown table " + std::to_string(ev.table));
    out.push_back(std::make_shared<const Query>(materialize_query(*data[ev.table], ev, spec.query_noise)));
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("percentile fraction must be in (0, 1]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // The small slack keeps products such as 0.1*10 from rounding up a rank.
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

double mean_recall(const Workbench& bench, const Trace& trace, const std::vector<std::shared_ptr<const Query>>& queries,
                   const std::vector<std::vector<Hit>>& hits, std::size_t sample) {
  const std::size_t n = std::min(sample, trace.events.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto exact = brute_force_topk(*bench.data[trace.events[i].table], queries[i]->vector, queries[i]->k);
    sum += recall_at_k(hits[i], exact);
  }
  return sum / static_cast<double>(n);
}

struct MapDump {
  std::mutex mu;
  std::string text = "epoch,mapping_id,ccd,est_bytes\n";

  void add(const MapSnapshot& s) {
    std::lock_guard lock(mu);
    for (const auto& [id, ccd] : s.map.assign) {
      const auto it = s.map.bytes.find(id);
      text += std::to_string(s.map.epoch) + "," + id.to_string() + "," + std::to_string(ccd) + "," +
              std::to_string(it == s.map.bytes.end() ? 0 : it->second) + "\n";
    }
  }
};

}  // namespace

RunReport run_benchmark(const RunConfig& cfg, const Workbench& bench, const Trace& trace) {
  const Topology topo = load_topology(cfg.topology);
  for (const auto& ev : trace.events) {
    if (!bench.tables.contains(ev.table)) {
      throw std::invalid_argument("trace references unknown table " + std::to_string(ev.table));
    }
  }
  const auto queries = bench.queries(trace);

  RunReport rep;
  rep.mode = to_string(cfg.policy.mode);
  rep.topology = topo.describe();
  rep.requests = trace.events.size();
  rep.trace_digest = trace_digest(trace);
  MapDump dump;

  std::vector<double> latencies;
  if (cfg.run == RunKind::Sim) {
    rep.run = "sim";
    SimConfig sc;
    sc.policy = cfg.policy;
    sc.window = cfg.window;
    sc.cache_sim = cfg.cache_sim;
    sc.block_bytes = cfg.block_bytes;
    sc.ccd_l3_bytes = cfg.ccd_l3_bytes;
    sc.cost = cfg.cost;
    sc.load = cfg.load;
    sc.clients = cfg.clients;
    sc.seed = cfg.seed;
    if (!cfg.dump_maps.empty()) sc.on_publish = [&dump](const MapSnapshot& s) { dump.add(s); };
    std::vector<SimRequest> reqs;
    reqs.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
      reqs.push_back({trace.events[i].table, queries[i], trace.events[i].ts_us});
    }
    SimReport sr = simulate(topo, bench.tables, reqs, sc);
    latencies = std::move(sr.latency_us);
    rep.hits = std::move(sr.hits);
    rep.steals = sr.steals;
    rep.cache_on = sr.cache_on;
    rep.llc = sr.cache.aggregate;
    rep.epochs_published = sr.dispatch.epochs_published;
    rep.qps = sr.makespan_ns > 0 ? static_cast<double>(rep.requests) * 1e9 / static_cast<double>(sr.makespan_ns) : 0.0;
  } else {
    rep.run = "wall";
    RuntimeOptions ro;
    ro.policy = cfg.policy;
    ro.window = cfg.window;
    ro.pin_threads = true;
    ro.seed = cfg.seed;
    Runtime rt(topo, ro);
    if (!cfg.dump_maps.empty()) rt.dispatcher().set_publish_hook([&dump](const MapSnapshot& s) { dump.add(s); });
    rt.start();
    ReplayOptions opt;
    opt.mode = cfg.load;
    opt.clients = cfg.clients;
    auto log = replay(trace.events, queries, rt, bench.tables, opt);
    rt.shutdown();
    std::int64_t first = 0, last = 0;
    if (!log.empty()) {
      first = log.front().arrival_us;
      last = log.front().completion_us;
    }
    rep.hits.resize(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (!log[i].ok) rep.complete = false;
      first = std::min(first, log[i].arrival_us);
      last = std::max(last, log[i].completion_us);
      latencies.push_back(static_cast<double>(log[i].completion_us - log[i].arrival_us));
      rep.hits[i] = std::move(log[i].hits);
    }
    rep.steals = rt.steal_stats();
    rep.epochs_published = rt.dispatcher().stats().epochs_published;
    rep.qps = last > first ? static_cast<double>(rep.requests) * 1e6 / static_cast<double>(last - first) : 0.0;
  }
  if (!latencies.empty()) {
    rep.p50_us = percentile(latencies, 0.5);
    rep.p999_us = percentile(latencies, 0.999);
  }
  rep.recall_sample = mean_recall(bench, trace, queries, rep.hits, cfg.recall_sample);
  if (!cfg.dump_maps.empty()) write_csv_atomic(cfg.dump_maps, dump.text);
  return rep;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "mode",        "topology",   "qps",      "p50_us",        "p999_us",          "steals_intra",
      "steals_cross", "cross_ratio", "llc_accesses", "llc_misses", "llc_rate", "recall_sample",
      "epochs_published", "run", "requests", "trace_digest", "complete"};
  return cols;
}

std::string csv_header() {
  std::string out;
  for (const auto& c : csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out + "\n";
}

namespace {
std::string fmt(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}
}  // namespace

std::string csv_row(const RunReport& r) {
  std::ostringstream o;
  o << r.mode << ',' << r.topology << ',' << fmt(r.qps, 3) << ',' << fmt(r.p50_us, 3) << ',' << fmt(r.p999_us, 3)
    << ',' << r.steals.steals_intra << ',' << r.steals.steals_cross << ',' << fmt(r.steals.cross_ratio, 6) << ','
    << r.llc.accesses << ',' << r.llc.misses << ',' << fmt(r.llc.rate, 6) << ',' << fmt(r.recall_sample, 6) << ','
    << r.epochs_published << ',' << r.run << ',' << r.requests << ',' << r.trace_digest << ','
    << (r.complete ? 1 : 0) << '\n';
  return o.str();
}

std::string reports_csv(const std::vector<RunReport>& reports) {
  std::string out = csv_header();
  for (const auto& r : reports) out += csv_row(r);
  return out;
}

void write_csv_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<RunReport> read_reports_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line + "\n" != csv_header()) {
    throw std::runtime_error(path + ": header does not match the metrics schema");
  }
  std::vector<RunReport> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != csv_columns().size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(csv_columns().size()) + " columns");
    }
    try {
      RunReport r;
      r.mode = cells[0];
      r.topology = cells[1];
      r.qps = std::stod(cells[2]);
      r.p50_us = std::stod(cells[3]);
      r.p999_us = std::stod(cells[4]);
      r.steals.steals_intra = std::stoull(cells[5]);
      r.steals.steals_cross = std::stoull(cells[6]);
      r.steals.cross_ratio = std::stod(cells[7]);
      r.llc.accesses = std::stoull(cells[8]);
      r.llc.misses = std::stoull(cells[9]);
      r.llc.rate = std::stod(cells[10]);
      r.llc.zero_access = r.llc.accesses == 0;
      r.recall_sample = std::stod(cells[11]);
      r.epochs_published = std::stoull(cells[12]);
      r.run = cells[13];
      r.requests = std::stoull(cells[14]);
      r.trace_digest = cells[15];
      r.complete = cells[16] == "1";
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::string compare_runs(const std::vector<RunReport>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("compare needs at least two reports");
  for (const auto& r : reports) {
    if (r.trace_digest != reports.front().trace_digest) {
      throw std::invalid_argument("reports come from different traces (" + reports.front().trace_digest + " vs " +
                                  r.trace_digest + ")");
    }
  }
  struct Metric {
    const char* name;
    double (*get)(const RunReport&);
  };
  static const Metric metrics[] = {
      {"qps", [](const RunReport& r) { return r.qps; }},
      {"p50_us", [](const RunReport& r) { return r.p50_us; }},
      {"p999_us", [](const RunReport& r) { return r.p999_us; }},
      {"steals_intra", [](const RunReport& r) { return static_cast<double>(r.steals.steals_intra); }},
      {"steals_cross", [](const RunReport& r) { return static_cast<double>(r.steals.steals_cross); }},
      {"cross_ratio", [](const RunReport& r) { return r.steals.cross_ratio; }},
      {"llc_accesses", [](const RunReport& r) { return static_cast<double>(r.llc.accesses); }},
      {"llc_misses", [](const RunReport& r) { return static_cast<double>(r.llc.misses); }},
      {"llc_rate", [](const RunReport& r) { return r.llc.rate; }},
      {"recall_sample", [](const RunReport& r) { return r.recall_sample; }},
      {"epochs_published", [](const RunReport& r) { return static_cast<double>(r.epochs_published); }},
  };
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    labels.push_back(reports[i].mode + "@" + reports[i].topology + "#" + std::to_string(i));
  }
  std::string out = "metric";
  for (const auto& l : labels) out += "," + l;
  for (std::size_t i = 1; i < labels.size(); ++i) out += ",rel_delta_" + labels[i];
  out += "\n";
  for (const auto& m : metrics) {
    out += m.name;
    const double base = m.get(reports.front());
    for (const auto& r : reports) out += "," + fmt(m.get(r), 6);
    for (std::size_t i = 1; i < reports.size(); ++i) {
      const double v = m.get(reports[i]);
      if (base != 0.0) {
        out += "," + fmt((v - base) / std::abs(base), 6);
      } else {
        out += v == 0.0 ? ",0.000000" : (v > 0 ? ",inf" : ",-inf");
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace ccdorch
