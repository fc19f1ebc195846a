#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ccdorch/bench.hpp"

using namespace ccdorch;

namespace {

// "hnsw:60:1000:32" -> 60 HNSW tables of 1000 rows, dim 32.
std::vector<TableSpec> parse_tables(const std::string& text, const TableSpec& base) {
  std::vector<TableSpec> out;
  std::stringstream groups(text);
  std::string group;
  while (std::getline(groups, group, ',')) {
    std::vector<std::string> parts;
    std::stringstream ss(group);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 4) throw CLI::ValidationError("--tables", "expected kind:count:rows:dim, got '" + group + "'");
    TableSpec t = base;
    if (parts[0] == "hnsw") {
      t.kind = IndexKind::Hnsw;
    } else if (parts[0] == "ivf") {
      t.kind = IndexKind::Ivf;
    } else {
      throw CLI::ValidationError("--tables", "kind must be hnsw or ivf, got '" + parts[0] + "'");
    }
    const auto count = std::stoul(parts[1]);
    t.rows = static_cast<std::uint32_t>(std::stoul(parts[2]));
    t.dim = static_cast<std::uint32_t>(std::stoul(parts[3]));
    for (std::size_t i = 0; i < count; ++i) out.push_back(t);
  }
  if (out.empty()) throw CLI::ValidationError("--tables", "no tables given");
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind('.');
  const auto slash = path.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + "." + suffix;
  return path.substr(0, dot) + "." + suffix + path.substr(dot);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CCD-aware orchestration runtime for in-memory vector search"};
  app.set_config("--config", "", "TOML/INI file mirroring the command-line flags");
  app.require_subcommand(1);

  // gen-data
  auto* gen_data = app.add_subcommand("gen-data", "Write a synthetic Gaussian-mixture dataset");
  MixtureSpec mix;
  std::string data_out;
  gen_data->add_option("--rows", mix.count, "Vector count")->default_val(10000);
  gen_data->add_option("--dim", mix.dim, "Dimensionality")->default_val(64);
  gen_data->add_option("--components", mix.components, "Mixture components")->default_val(16);
  gen_data->add_option("--seed", mix.seed, "RNG seed")->default_val(1);
  gen_data->add_option("--out", data_out, "Output file")->required();

  // gen-trace
  auto* gen_trace = app.add_subcommand("gen-trace", "Write a synthetic request trace (JSONL + header)");
  TraceSpec ts;
  TableSpec table_base;
  std::string tables_text = "hnsw:60:1000:32";
  std::string trace_out;
  gen_trace->add_option("--tables", tables_text, "Comma list of kind:count:rows:dim")->default_val(tables_text);
  gen_trace->add_option("--M", table_base.M, "HNSW max degree")->default_val(32);
  gen_trace->add_option("--ef-construction", table_base.ef_construction, "HNSW build width")->default_val(500);
  gen_trace->add_option("--ef-search", table_base.ef_search, "HNSW search width")->default_val(64);
  gen_trace->add_option("--nlist", table_base.nlist, "IVF lists (0 = by table size)")->default_val(0);
  gen_trace->add_option("--nprobe", table_base.nprobe, "IVF lists probed per query")->default_val(8);
  gen_trace->add_option("--skew", ts.skew_s, "Zipf exponent over tables")->default_val(1.0);
  gen_trace->add_option("--rotate-period-us", ts.rotation_period_us, "Hot-set rotation period (0 = off)")->default_val(0);
  gen_trace->add_option("--rotate-fraction", ts.rotation_fraction, "Share of ranks re-drawn per period")->default_val(0.0);
  gen_trace->add_option("--requests", ts.requests, "Request count")->default_val(10000);
  gen_trace->add_option("--qps", ts.qps, "Arrival rate for timestamps")->default_val(10000.0);
  gen_trace->add_option("--clients", ts.clients, "Suggested closed-loop clients")->default_val(0);
  gen_trace->add_option("--k", ts.k, "Top-k per request")->default_val(10);
  gen_trace->add_option("--hotspot-skew", ts.hotspot_s, "Zipf exponent over rows within a table")->default_val(1.0);
  gen_trace->add_option("--noise", ts.query_noise, "Query perturbation stddev")->default_val(0.05f);
  gen_trace->add_option("--seed", ts.seed, "Trace seed")->default_val(1);
  gen_trace->add_option("--data-seed", ts.data_seed, "Dataset seed")->default_val(7);
  gen_trace->add_option("--out", trace_out, "Output trace path")->required();

  // build
  auto* build = app.add_subcommand("build", "Build every table of a trace and report index statistics");
  std::string build_trace;
  double calibrate = 0.0;
  std::size_t calib_queries = 100;
  bool write_header = false;
  build->add_option("--trace", build_trace, "Trace path")->required()->check(CLI::ExistingFile);
  build->add_option("--calibrate", calibrate, "Recall@k target for ef_search/nprobe calibration (0 = off)")
      ->default_val(0.0);
  build->add_option("--calibration-queries", calib_queries, "Held-out queries for calibration")->default_val(100);
  build->add_flag("--write-header", write_header, "Store calibrated values in the trace header");

  // run
  auto* run = app.add_subcommand("run", "Replay a trace under one or more modes and write metrics CSV");
  RunConfig rc;
  std::string run_trace, modes = "v2", run_kind = "sim", load = "closed", cache = "on", out_csv = "metrics.csv";
  std::string scale;
  run->add_option("--trace", run_trace, "Trace path")->required()->check(CLI::ExistingFile);
  run->add_option("--topology", rc.topology, "auto | sim:<ccds>x<cores> | file:<path>")->default_val("sim:12x8");
  run->add_option("--mode", modes, "Comma list of v0, v1, v2")->default_val("v2");
  run->add_option("--run", run_kind, "sim | wall")->default_val("sim")->check(CLI::IsMember({"sim", "wall"}));
  run->add_option("--load", load, "closed | open")->default_val("closed")->check(CLI::IsMember({"closed", "open"}));
  run->add_option("--clients", rc.clients, "Closed-loop clients")->default_val(64);
  run->add_option("--window-us", rc.window.window_us, "Remap window length in microseconds")->default_val(10'000'000);
  run->add_option("--min-events", rc.window.min_events, "Completions needed to remap a window")->default_val(1);
  run->add_flag("--cross-gate", rc.policy.cross_gate, "Gate V2 cross-CCD steals behind sustained idleness");
  run->add_option("--cross-gate-rounds", rc.policy.cross_gate_rounds, "Idle rounds before a gated cross steal")
      ->default_val(64);
  run->add_option("--cache-sim", cache, "on | off (sim runs)")->default_val("on")->check(CLI::IsMember({"on", "off"}));
  run->add_option("--block-bytes", rc.block_bytes, "Cache block size")->default_val(kDefaultBlockBytes);
  run->add_option("--ccd-l3-bytes", rc.ccd_l3_bytes, "Modeled L3 per CCD")->default_val(kDefaultCcdL3Bytes);
  run->add_option("--hit-ns", rc.cost.hit_ns, "Simulated cost of a cached block")->default_val(rc.cost.hit_ns);
  run->add_option("--miss-ns", rc.cost.miss_ns, "Simulated cost of a missed block")->default_val(rc.cost.miss_ns);
  run->add_option("--task-ns", rc.cost.task_base_ns, "Simulated fixed cost per task")->default_val(rc.cost.task_base_ns);
  run->add_option("--recall-sample", rc.recall_sample, "Requests checked against brute force")->default_val(50);
  run->add_option("--seed", rc.seed, "Scheduler seed")->default_val(1);
  run->add_option("--out", out_csv, "Metrics CSV")->default_val("metrics.csv");
  run->add_option("--dump-maps", rc.dump_maps, "Per-epoch map CSV (epoch,mapping_id,ccd,est_bytes)");
  run->add_option("--scale-ccds", scale, "Comma list of CCD counts to sweep with the topology's cores per CCD");

  // compare
  auto* compare = app.add_subcommand("compare", "Side-by-side metrics with relative deltas");
  std::vector<std::string> inputs;
  std::string compare_out;
  compare->add_option("inputs", inputs, "Metrics CSV files")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "Comparison CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_data) {
      write_dataset(data_out, generate_mixture(mix));
      std::cout << "wrote " << mix.count << " x " << mix.dim << " vectors to " << data_out << "\n";
      return 0;
    }

    if (*gen_trace) {
      ts.tables = parse_tables(tables_text, table_base);
      const Trace trace = generate_trace(ts);
      write_trace(trace, trace_out);
      std::cout << "wrote " << trace.events.size() << " events over " << ts.tables.size() << " tables to " << trace_out
                << " (digest " << trace_digest(trace) << ")\n";
      return 0;
    }

    if (*build) {
      Trace trace = read_trace(build_trace);
      const auto t0 = std::chrono::steady_clock::now();
      Workbench wb = Workbench::build(trace.spec);
      const auto ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "built " << wb.spec.tables.size() << " tables in " << ms << " ms\n";
      for (TableId t = 0; t < wb.spec.tables.size(); ++t) {
        auto& spec = trace.spec.tables[t];
        std::cout << "table " << t << ": ";
        if (wb.tables.is_hnsw(t)) {
          const auto& h = *wb.tables.hnsw(t).index;
          std::cout << "hnsw rows=" << h.size() << " levels=" << h.max_level() + 1;
          if (calibrate > 0.0) {
            MixtureSpec qs{spec.dim, calib_queries, 16, 10.0f, 1.0f, trace.spec.seed + 7919 + t};
            spec.ef_search = static_cast<std::uint32_t>(calibrate_ef_search(h, generate_mixture(qs), trace.spec.k, calibrate));
            std::cout << " ef_search=" << spec.ef_search;
          }
        } else {
          const auto& v = *wb.tables.ivf(t).index;
          std::cout << "ivf rows=" << v.vectors().size() << " nlist=" << v.nlist();
          if (calibrate > 0.0) {
            MixtureSpec qs{spec.dim, calib_queries, 16, 10.0f, 1.0f, trace.spec.seed + 7919 + t};
            spec.nprobe = static_cast<std::uint32_t>(calibrate_nprobe(v, generate_mixture(qs), trace.spec.k, calibrate));
            std::cout << " nprobe=" << spec.nprobe;
          }
        }
        std::cout << "\n";
      }
      if (write_header) {
        write_trace(trace, build_trace);
        std::cout << "updated " << trace_header_path(build_trace) << "\n";
      }
      return 0;
    }

    if (*run) {
      // Config and file errors surface here, before any index is built.
      const Trace trace = read_trace(run_trace);
      std::vector<StealMode> mode_list;
      for (const auto& m : split(modes, ',')) mode_list.push_back(parse_steal_mode(m));
      if (mode_list.empty()) throw std::invalid_argument("--mode: no modes given");
      rc.run = run_kind == "sim" ? RunKind::Sim : RunKind::WallClock;
      rc.load = load == "closed" ? LoadMode::ClosedLoop : LoadMode::OpenLoop;
      rc.cache_sim = cache == "on" && rc.run == RunKind::Sim;
      std::vector<std::string> topologies{rc.topology};
      if (!scale.empty()) {
        const Topology base = load_topology(rc.topology);
        const auto per_ccd = base.cores_of(0).size();
        topologies.clear();
        for (const auto& c : split(scale, ',')) topologies.push_back("sim:" + c + "x" + std::to_string(per_ccd));
      }
      for (const auto& t : topologies) load_topology(t);

      const Workbench wb = Workbench::build(trace.spec);
      std::vector<RunReport> reports;
      const bool many = mode_list.size() * topologies.size() > 1;
      for (const auto& topo : topologies) {
        for (StealMode m : mode_list) {
          RunConfig cfg = rc;
          cfg.topology = topo;
          cfg.policy.mode = m;
          if (!rc.dump_maps.empty() && many) {
            cfg.dump_maps = with_suffix(rc.dump_maps, to_string(m) + "-" + load_topology(topo).describe());
          }
          try {
            reports.push_back(run_benchmark(cfg, wb, trace));
          } catch (...) {
            RunReport partial;
            partial.mode = to_string(m);
            partial.topology = load_topology(topo).describe();
            partial.run = run_kind;
            partial.trace_digest = trace_digest(trace);
            partial.complete = false;
            reports.push_back(partial);
            write_csv_atomic(out_csv, reports_csv(reports));
            throw;
          }
          const auto& r = reports.back();
          std::printf("%s %s qps=%.1f p50=%.1fus p999=%.1fus intra=%llu cross=%llu cross_ratio=%.3f llc_rate=%.4f "
                      "recall=%.4f epochs=%llu\n",
                      r.mode.c_str(), r.topology.c_str(), r.qps, r.p50_us, r.p999_us,
                      static_cast<unsigned long long>(r.steals.steals_intra),
                      static_cast<unsigned long long>(r.steals.steals_cross), r.steals.cross_ratio, r.llc.rate,
                      r.recall_sample, static_cast<unsigned long long>(r.epochs_published));
        }
      }
      write_csv_atomic(out_csv, reports_csv(reports));
      return 0;
    }

    if (*compare) {
      std::vector<RunReport> reports;
      for (const auto& path : inputs) {
        auto part = read_reports_csv(path);
        reports.insert(reports.end(), part.begin(), part.end());
      }
      const std::string table = compare_runs(reports);
      if (compare_out.empty()) {
        std::cout << table;
      } else {
        write_csv_atomic(compare_out, table);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
