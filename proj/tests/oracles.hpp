#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "ccdorch/dispatch.hpp"

namespace oracle {

using ccdorch::MappingId;
using ccdorch::TrafficEstimate;

// Smallest achievable max per-CCD load over all m^n assignments.
inline std::uint64_t optimal_max_load(const std::vector<std::uint64_t>& t, std::uint32_t m) {
  const std::size_t n = t.size();
  std::vector<std::uint32_t> a(n, 0);
  std::uint64_t best = ~std::uint64_t{0};
  while (true) {
    std::vector<std::uint64_t> L(m, 0);
    for (std::size_t i = 0; i < n; ++i) L[a[i]] += t[i];
    best = std::min(best, *std::max_element(L.begin(), L.end()));
    std::size_t k = 0;
    while (k < n && ++a[k] == m) a[k++] = 0;
    if (k == n) break;
  }
  return best;
}

// Straight transcription of the balanced hot-cold sweep, written against
// plain vectors: returns the CCD of each input position.
inline std::vector<std::uint32_t> hot_cold_sweep(const std::vector<std::uint64_t>& t,
                                                 const std::vector<MappingId>& ids, std::uint32_t m) {
  const std::size_t n = t.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    if (t[x] != t[y]) return t[x] > t[y];
    return ids[x] < ids[y];
  });
  std::uint64_t sum = 0;
  for (auto v : t) sum += v;
  const double mu = static_cast<double>(sum) / m;
  std::vector<std::uint64_t> L(m, 0);
  std::vector<std::uint32_t> out(n, 0);
  long i = 0, j = static_cast<long>(n) - 1;
  while (i <= j) {
    std::uint32_t r = 0;
    for (std::uint32_t c = 1; c < m; ++c) {
      if (L[c] < L[r]) r = c;
    }
    const std::size_t hot = idx[i++];
    double cap = mu - static_cast<double>(L[r]) - static_cast<double>(t[hot]);
    if (cap < 0) cap = 0;
    out[hot] = r;
    L[r] += t[hot];
    if (i <= j && static_cast<double>(t[idx[j]]) <= cap) {
      out[idx[j]] = r;
      L[r] += t[idx[j]];
      --j;
    }
  }
  return out;
}

inline std::vector<TrafficEstimate> as_traffic(const std::vector<std::uint64_t>& t) {
  std::vector<TrafficEstimate> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.push_back({MappingId::hnsw(static_cast<ccdorch::TableId>(i)), t[i], 1});
  }
  return out;
}

struct Instance {
  std::vector<std::uint64_t> traffic;
  std::uint32_t m = 1;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t max_n, std::uint32_t min_m, std::uint32_t max_m,
                                std::uint64_t max_traffic) {
  Instance in;
  in.m = std::uniform_int_distribution<std::uint32_t>(min_m, max_m)(rng);
  const auto n = std::uniform_int_distribution<std::size_t>(1, max_n)(rng);
  std::uniform_int_distribution<std::uint64_t> td(0, max_traffic);
  for (std::size_t i = 0; i < n; ++i) in.traffic.push_back(td(rng));
  return in;
}

// The two ids with the largest traffic, ties by ascending id.
inline std::pair<std::size_t, std::size_t> top_two(const std::vector<std::uint64_t>& t) {
  std::vector<std::size_t> idx(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return t[a] > t[b]; });
  return {idx[0], idx[1]};
}

}  // namespace oracle
