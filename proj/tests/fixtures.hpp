#pragma once

#include "ccdorch/bench.hpp"

namespace fixtures {

// A few small HNSW tables plus one IVF table, skewed.
inline ccdorch::TraceSpec mixed_spec(std::uint64_t requests, std::uint64_t seed = 1) {
  using namespace ccdorch;
  TraceSpec s;
  for (int i = 0; i < 6; ++i) {
    TableSpec t;
    t.rows = 300;
    t.dim = 16;
    t.M = 8;
    t.ef_construction = 48;
    t.ef_search = 24;
    s.tables.push_back(t);
  }
  TableSpec ivf;
  ivf.kind = IndexKind::Ivf;
  ivf.rows = 1200;
  ivf.dim = 16;
  ivf.nlist = 16;
  ivf.nprobe = 4;
  s.tables.push_back(ivf);
  s.requests = requests;
  s.qps = 200000;
  s.skew_s = 1.0;
  s.seed = seed;
  return s;
}

}  // namespace fixtures
