#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "ccdorch/workload.hpp"

using namespace ccdorch;

namespace {

TraceSpec small_spec(std::size_t tables, std::uint64_t requests) {
  TraceSpec s;
  for (std::size_t i = 0; i < tables; ++i) {
    TableSpec t;
    t.rows = 200;
    t.dim = 8;
    t.M = 8;
    t.ef_construction = 32;
    t.ef_search = 16;
    s.tables.push_back(t);
  }
  s.requests = requests;
  s.qps = 100000;
  return s;
}

}  // namespace

TEST(Zipf, Weights) {
  auto u = zipf_weights(4, 0.0);
  for (double w : u) EXPECT_DOUBLE_EQ(w, 0.25);
  auto two = zipf_weights(2, 1.0);
  EXPECT_NEAR(two[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(two[1], 1.0 / 3.0, 1e-12);
  for (double s : {0.0, 0.5, 1.0, 2.0}) {
    auto w = zipf_weights(50, s);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 1; i < w.size(); ++i) EXPECT_LE(w[i], w[i - 1]);
  }
  EXPECT_THROW(zipf_weights(0, 1.0), std::invalid_argument);
  EXPECT_THROW(zipf_weights(3, -0.1), std::invalid_argument);
}

TEST(Trace, Deterministic) {
  auto spec = small_spec(5, 3000);
  auto a = generate_trace(spec), b = generate_trace(spec);
  EXPECT_EQ(a, b);
  EXPECT_EQ(serialize_events(a.events), serialize_events(b.events));
  EXPECT_EQ(trace_digest(a), trace_digest(b));
  spec.seed = 2;
  EXPECT_NE(trace_digest(generate_trace(spec)), trace_digest(a));
}

TEST(Trace, SkewAudit) {
  auto spec = small_spec(60, 100000);
  spec.skew_s = 1.2;
  auto tr = generate_trace(spec);
  std::vector<std::uint64_t> count(60, 0);
  for (const auto& e : tr.events) ++count[e.table];
  std::sort(count.rbegin(), count.rend());
  const double top = std::accumulate(count.begin(), count.begin() + 6, 0.0) / tr.events.size();
  const auto w = zipf_weights(60, 1.2);
  const double analytic = std::accumulate(w.begin(), w.begin() + 6, 0.0);
  EXPECT_GT(top, 0.5);
  EXPECT_NEAR(top, analytic, 0.01);
}

TEST(Trace, NoRotationKeepsRanks) {
  auto spec = small_spec(10, 5000);
  auto base = generate_trace(spec);
  spec.rotation_period_us = 2000;
  spec.rotation_fraction = 0.0;
  auto rotated = generate_trace(spec);
  EXPECT_EQ(base.events, rotated.events);
  spec.rotation_fraction = 1.0;
  EXPECT_NE(generate_trace(spec).events, base.events);
}

TEST(Trace, RotationMovesTheHotTable) {
  auto spec = small_spec(20, 40000);
  spec.qps = 1e6;
  spec.rotation_period_us = 10000;
  spec.rotation_fraction = 1.0;
  auto tr = generate_trace(spec);
  auto hottest = [&](std::int64_t lo, std::int64_t hi) {
    std::vector<int> c(20, 0);
    for (const auto& e : tr.events) {
      if (e.ts_us >= lo && e.ts_us < hi) ++c[e.table];
    }
    return std::max_element(c.begin(), c.end()) - c.begin();
  };
  int changes = 0;
  for (int p = 0; p + 1 < 3; ++p) changes += hottest(p * 10000, (p + 1) * 10000) != hottest((p + 1) * 10000, (p + 2) * 10000);
  EXPECT_GT(changes, 0);
}

TEST(Trace, EventsAreValid) {
  auto spec = small_spec(3, 2000);
  auto tr = generate_trace(spec);
  ASSERT_EQ(tr.events.size(), 2000u);
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    EXPECT_LT(tr.events[i].table, 3u);
    EXPECT_LT(tr.events[i].row, 200u);
    if (i) EXPECT_GE(tr.events[i].ts_us, tr.events[i - 1].ts_us);
  }
  const double span_s = static_cast<double>(tr.events.back().ts_us) / 1e6;
  EXPECT_NEAR(2000 / span_s, spec.qps, spec.qps * 0.1);
}

TEST(Trace, RejectsBadSpecs) {
  TraceSpec s;
  EXPECT_THROW(generate_trace(s), std::invalid_argument);
  s = small_spec(2, 10);
  s.qps = 0;
  EXPECT_THROW(generate_trace(s), std::invalid_argument);
}

TEST(Trace, FileRoundTrip) {
  auto spec = small_spec(4, 500);
  spec.tables[2].kind = IndexKind::Ivf;
  spec.tables[2].nlist = 8;
  spec.rotation_period_us = 500;
  spec.rotation_fraction = 0.25;
  auto tr = generate_trace(spec);
  const std::string path = ::testing::TempDir() + "trace_rt.jsonl";
  write_trace(tr, path);
  auto back = read_trace(path);
  EXPECT_EQ(back, tr);
  EXPECT_EQ(trace_digest(back), trace_digest(tr));
  EXPECT_EQ(parse_header(serialize_header(spec)), spec);
  std::remove(path.c_str());
  std::remove(trace_header_path(path).c_str());
}

TEST(Trace, ParseErrorsNameTheProblem) {
  auto expect_msg = [](auto fn, const std::string& needle) {
    try {
      fn();
      ADD_FAILURE() << "no exception";
    } catch (const std::exception& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_msg([] { parse_header("{}"); }, "tables");
  expect_msg([] { parse_header("{not json"); }, "trace header");

  auto spec = small_spec(2, 5);
  auto tr = generate_trace(spec);
  const std::string path = ::testing::TempDir() + "trace_bad.jsonl";
  write_trace(tr, path);
  {
    std::ofstream f(path, std::ios::app);
    f << "{\"ts_us\": 1}\n";
  }
  expect_msg([&] { read_trace(path); }, ":6: missing field 'table'");
  std::remove(path.c_str());
  std::remove(trace_header_path(path).c_str());
  expect_msg([] { read_trace("/nonexistent/trace.jsonl"); }, "cannot open");
}

TEST(Trace, QueriesFromDatasets) {
  auto spec = small_spec(2, 10);
  auto d1 = table_dataset(spec, 1);
  EXPECT_EQ(d1, table_dataset(spec, 1));
  EXPECT_NE(d1.data(), table_dataset(spec, 0).data());
  auto tr = generate_trace(spec);
  auto q = materialize_query(d1, tr.events[0], 0.0f);
  EXPECT_EQ(q.vector, std::vector<float>(d1.row(tr.events[0].row).begin(), d1.row(tr.events[0].row).end()));
  auto noisy = materialize_query(d1, tr.events[0], 0.1f);
  EXPECT_EQ(noisy.vector, materialize_query(d1, tr.events[0], 0.1f).vector);
  EXPECT_NE(noisy.vector, q.vector);
  TraceEvent bad = tr.events[0];
  bad.row = 1000;
  EXPECT_THROW(materialize_query(d1, bad, 0.0f), std::out_of_range);
}
