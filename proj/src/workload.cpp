#include "ccdorch/workload.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace ccdorch {

using json = nlohmann::ordered_json;

std::vector<double> zipf_weights(std::size_t n, double s) {
  if (n == 0) throw std::invalid_argument("zipf_weights: n must be at least 1");
  if (!(s >= 0.0)) throw std::invalid_argument("zipf_weights: exponent must be non-negative");
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::pow(static_cast<double>(i + 1), -s);
    total += w[i];
  }
  for (auto& x : w) x /= total;
  return w;
}

namespace {

// Rows of one table ordered by popularity, with a Zipf sampler over ranks.
struct HotspotSampler {
  std::vector<std::uint32_t> order;
  std::discrete_distribution<std::size_t> rank;
};

HotspotSampler make_hotspots(const TraceSpec& spec, TableId t) {
  const auto rows = spec.tables[t].rows;
  HotspotSampler h;
  h.order.resize(rows);
  for (std::uint32_t i = 0; i < rows; ++i) h.order[i] = i;
  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + t + 1);
  std::shuffle(h.order.begin(), h.order.end(), rng);
  const auto w = zipf_weights(rows, spec.hotspot_s);
  h.rank = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  return h;
}

void rotate_ranks(std::vector<TableId>& by_rank, double fraction, std::mt19937_64& rng) {
  const auto n = by_rank.size();
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (m < 2) return;
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  std::shuffle(pos.begin(), pos.end(), rng);
  pos.resize(m);
  std::sort(pos.begin(), pos.end());
  std::vector<TableId> picked;
  picked.reserve(m);
  for (auto p : pos) picked.push_back(by_rank[p]);
  std::shuffle(picked.begin(), picked.end(), rng);
  for (std::size_t i = 0; i < m; ++i) by_rank[pos[i]] = picked[i];
}

}  // namespace

Trace generate_trace(const TraceSpec& spec) {
  if (spec.tables.empty()) throw std::invalid_argument("trace spec has no tables");
  if (!(spec.qps > 0.0)) throw std::invalid_argument("trace spec qps must be positive");
  if (spec.k == 0) throw std::invalid_argument("trace spec k must be at least 1");
  for (std::size_t t = 0; t < spec.tables.size(); ++t) {
    if (spec.tables[t].rows == 0) throw std::invalid_argument("table " + std::to_string(t) + " has no rows");
  }
  Trace trace;
  trace.spec = spec;
  trace.events.reserve(spec.requests);

  std::mt19937_64 rng(spec.seed);
  const auto n = spec.tables.size();
  std::vector<TableId> by_rank(n);
  for (std::size_t i = 0; i < n; ++i) by_rank[i] = static_cast<TableId>(i);
  std::shuffle(by_rank.begin(), by_rank.end(), rng);

  const auto w = zipf_weights(n, spec.skew_s);
  std::discrete_distribution<std::size_t> pick_rank(w.begin(), w.end());
  std::exponential_distribution<double> gap(spec.qps / 1e6);
  std::vector<std::unique_ptr<HotspotSampler>> hot(n);

  double t_us = 0.0;
  std::int64_t period = 0;
  for (std::uint64_t i = 0; i < spec.requests; ++i) {
    t_us += gap(rng);
    const auto ts = static_cast<std::int64_t>(t_us);
    if (spec.rotation_period_us > 0) {
      const std::int64_t p = ts / spec.rotation_period_us;
      for (; period < p; ++period) rotate_ranks(by_rank, spec.rotation_fraction, rng);
    }
    const TableId table = by_rank[pick_rank(rng)];
    if (!hot[table]) hot[table] = std::make_unique<HotspotSampler>(make_hotspots(spec, table));
    TraceEvent ev;
    ev.ts_us = ts;
    ev.table = table;
    ev.k = spec.k;
    ev.row = hot[table]->order[hot[table]->rank(rng)];
    ev.qseed = rng();
    trace.events.push_back(ev);
  }
  return trace;
}

std::string trace_header_path(const std::string& trace_path) { return trace_path + ".header.json"; }

std::string serialize_header(const TraceSpec& spec) {
  json j;
  json tables = json::array();
  for (std::size_t i = 0; i < spec.tables.size(); ++i) {
    const auto& t = spec.tables[i];
    tables.push_back({{"id", i},
                      {"kind", t.kind == IndexKind::Hnsw ? "hnsw" : "ivf"},
                      {"rows", t.rows},
                      {"dim", t.dim},
                      {"M", t.M},
                      {"ef_construction", t.ef_construction},
                      {"ef_search", t.ef_search},
                      {"nlist", t.nlist},
                      {"nprobe", t.nprobe}});
  }
  j["tables"] = tables;
  j["skew_s"] = spec.skew_s;
  j["rotation_period_us"] = spec.rotation_period_us;
  j["rotation_fraction"] = spec.rotation_fraction;
  j["requests"] = spec.requests;
  j["qps"] = spec.qps;
  j["clients"] = spec.clients;
  j["k"] = spec.k;
  j["hotspot_s"] = spec.hotspot_s;
  j["query_noise"] = spec.query_noise;
  j["seed"] = spec.seed;
  j["data_seed"] = spec.data_seed;
  return j.dump(2) + "\n";
}

std::string serialize_events(const std::vector<TraceEvent>& events) {
  std::string out;
  out.reserve(events.size() * 80);
  for (const auto& e : events) {
    out += "{\"ts_us\":" + std::to_string(e.ts_us) + ",\"table\":" + std::to_string(e.table) +
           ",\"k\":" + std::to_string(e.k) + ",\"row\":" + std::to_string(e.row) +
           ",\"qseed\":" + std::to_string(e.qseed) + "}\n";
  }
  return out;
}

namespace {
void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

template <typename T>
T field(const json& j, const char* name, const std::string& where) {
  if (!j.contains(name)) throw std::runtime_error(where + ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error(where + ": field '" + std::string(name) + "' has the wrong type");
  }
}
}  // namespace

void write_trace(const Trace& trace, const std::string& path) {
  write_file(trace_header_path(path), serialize_header(trace.spec));
  write_file(path, serialize_events(trace.events));
}

TraceSpec parse_header(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("trace header: ") + e.what());
  }
  TraceSpec s;
  if (!j.contains("tables") || !j["tables"].is_array()) throw std::runtime_error("trace header: missing field 'tables'");
  for (std::size_t i = 0; i < j["tables"].size(); ++i) {
    const auto& t = j["tables"][i];
    const std::string where = "trace header tables[" + std::to_string(i) + "]";
    TableSpec ts;
    if (field<std::size_t>(t, "id", where) != i) throw std::runtime_error(where + ": field 'id' must equal its position");
    const auto kind = field<std::string>(t, "kind", where);
    if (kind == "hnsw") {
      ts.kind = IndexKind::Hnsw;
    } else if (kind == "ivf") {
      ts.kind = IndexKind::Ivf;
    } else {
      throw std::runtime_error(where + ": field 'kind' must be hnsw or ivf");
    }
    ts.rows = field<std::uint32_t>(t, "rows", where);
    ts.dim = field<std::uint32_t>(t, "dim", where);
    ts.M = field<std::uint32_t>(t, "M", where);
    ts.ef_construction = field<std::uint32_t>(t, "ef_construction", where);
    ts.ef_search = field<std::uint32_t>(t, "ef_search", where);
    ts.nlist = field<std::uint32_t>(t, "nlist", where);
    ts.nprobe = field<std::uint32_t>(t, "nprobe", where);
    s.tables.push_back(ts);
  }
  const std::string where = "trace header";
  s.skew_s = field<double>(j, "skew_s", where);
  s.rotation_period_us = field<std::int64_t>(j, "rotation_period_us", where);
  s.rotation_fraction = field<double>(j, "rotation_fraction", where);
  s.requests = field<std::uint64_t>(j, "requests", where);
  s.qps = field<double>(j, "qps", where);
  s.clients = field<std::uint32_t>(j, "clients", where);
  s.k = field<std::uint32_t>(j, "k", where);
  s.hotspot_s = field<double>(j, "hotspot_s", where);
  s.query_noise = field<float>(j, "query_noise", where);
  s.seed = field<std::uint64_t>(j, "seed", where);
  s.data_seed = field<std::uint64_t>(j, "data_seed", where);
  return s;
}

Trace read_trace(const std::string& path) {
  Trace trace;
  trace.spec = parse_header(slurp(trace_header_path(path)));
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    TraceEvent ev;
    ev.ts_us = field<std::int64_t>(j, "ts_us", where);
    ev.table = field<TableId>(j, "table", where);
    ev.k = field<std::uint32_t>(j, "k", where);
    ev.row = field<std::uint32_t>(j, "row", where);
    ev.qseed = field<std::uint64_t>(j, "qseed", where);
    if (!trace.events.empty() && ev.ts_us < trace.events.back().ts_us) {
      throw std::runtime_error(where + ": ts_us goes backwards");
    }
    trace.events.push_back(ev);
  }
  return trace;
}

std::string trace_digest(const Trace& trace) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  mix(serialize_header(trace.spec));
  mix(serialize_events(trace.events));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

VectorSet table_dataset(const TraceSpec& spec, TableId table) {
  const auto& t = spec.tables.at(table);
  MixtureSpec m;
  m.dim = t.dim;
  m.count = t.rows;
  m.components = std::max<std::uint32_t>(1, std::min<std::uint32_t>(16, t.rows / 64));
  m.seed = spec.data_seed * 1000003ULL + table;
  return generate_mixture(m);
}

Query materialize_query(const VectorSet& data, const TraceEvent& ev, float noise) {
  Query q;
  const auto row = data.row_checked(ev.row);
  q.vector.assign(row.begin(), row.end());
  if (noise > 0.0f) {
    std::mt19937_64 rng(ev.qseed);
    std::normal_distribution<float> n(0.0f, noise);
    for (auto& x : q.vector) x += n(rng);
  }
  q.k = ev.k;
  q.arrival_us = ev.ts_us;
  return q;
}

namespace {

using Done = std::function<void(std::vector<Hit>, std::exception_ptr)>;

void submit_request(Runtime& rt, const TableRegistry& tables, TableId table, std::shared_ptr<const Query> q,
                    Done done) {
  if (tables.is_hnsw(table)) {
    const auto& t = tables.hnsw(table);
    auto shared_done = std::make_shared<Done>(std::move(done));
    try {
      rt.submit_async(make_hnsw_functor(t.index, t.ef_search), std::move(q), MappingId::hnsw(table),
                      [shared_done](TaskResult&& r) {
                        (*shared_done)(r.error ? std::vector<Hit>{} : std::move(r.output.hits), r.error);
                      });
    } catch (...) {
      (*shared_done)({}, std::current_exception());
    }
    return;
  }
  const auto& t = tables.ivf(table);
  const auto lists = t.index->select_lists(q->vector, std::min<std::size_t>(t.nprobe, t.index->nlist()));
  struct State {
    std::mutex mu;
    std::vector<std::vector<Hit>> parts;
    std::size_t remaining;
    std::exception_ptr error;
    std::uint32_t k;
    Done done;
  };
  auto st = std::make_shared<State>();
  st->parts.resize(lists.size());
  st->remaining = lists.size();
  st->k = q->k;
  st->done = std::move(done);
  auto settle = [st](std::size_t count) {
    bool last = false;
    {
      std::lock_guard lock(st->mu);
      st->remaining -= count;
      last = st->remaining == 0;
    }
    if (!last) return;
    if (st->error) return st->done({}, st->error);
    st->done(merge_topk(st->parts, st->k), nullptr);
  };
  for (std::size_t i = 0; i < lists.size(); ++i) {
    try {
      rt.submit_async(make_ivf_scan_functor(t.index, lists[i]), q, MappingId::ivf(table, lists[i]),
                      [st, i, settle](TaskResult&& r) {
                        {
                          std::lock_guard lock(st->mu);
                          if (r.error && !st->error) st->error = r.error;
                          if (!r.error) st->parts[i] = std::move(r.output.hits);
                        }
                        settle(1);
                      });
    } catch (...) {
      {
        std::lock_guard lock(st->mu);
        if (!st->error) st->error = std::current_exception();
      }
      settle(lists.size() - i);
      return;
    }
  }
}

}  // namespace

std::vector<LatencyRecord> replay(const std::vector<TraceEvent>& events,
                                  const std::vector<std::shared_ptr<const Query>>& queries, Runtime& rt,
                                  const TableRegistry& tables, const ReplayOptions& options) {
  if (queries.size() != events.size()) throw std::invalid_argument("replay: one query per event required");
  for (const auto& e : events) {
    if (!tables.contains(e.table)) throw std::invalid_argument("trace references unknown table " + std::to_string(e.table));
  }
  std::vector<LatencyRecord> log(events.size());
  if (events.empty()) return log;

  if (options.mode == LoadMode::ClosedLoop) {
    std::atomic<std::size_t> next{0};
    auto client = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= events.size()) return;
        auto& rec = log[i];
        rec.request = i;
        rec.arrival_us = rt.now_us();
        std::promise<void> p;
        submit_request(rt, tables, events[i].table, queries[i], [&](std::vector<Hit> hits, std::exception_ptr err) {
          rec.completion_us = rt.now_us();
          rec.ok = !err;
          rec.hits = std::move(hits);
          p.set_value();
        });
        p.get_future().wait();
      }
    };
    std::vector<std::thread> clients;
    for (std::uint32_t c = 0; c < std::max<std::uint32_t>(1, options.clients); ++c) clients.emplace_back(client);
    for (auto& t : clients) t.join();
    return log;
  }

  std::mutex mu;
  std::condition_variable cv;
  std::size_t outstanding = events.size();
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t base_us = rt.now_us();
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::this_thread::sleep_until(start + std::chrono::microseconds(events[i].ts_us - events.front().ts_us));
    auto& rec = log[i];
    rec.request = i;
    rec.arrival_us = base_us + events[i].ts_us - events.front().ts_us;  // scheduled, so dispatch lag counts
    submit_request(rt, tables, events[i].table, queries[i], [&, i](std::vector<Hit> hits, std::exception_ptr err) {
      auto& r = log[i];
      r.completion_us = rt.now_us();
      r.ok = !err;
      r.hits = std::move(hits);
      std::lock_guard lock(mu);
      if (--outstanding == 0) cv.notify_all();
    });
  }
  std::unique_lock lock(mu);
  cv.wait(lock, [&] { return outstanding == 0; });
  return log;
}

}  // namespace ccdorch
