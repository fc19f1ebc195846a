#include "ccdorch/index_ivf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>

namespace ccdorch {

std::uint32_t default_nlist(std::size_t rows) {
  if (rows == 0) return 1;
  const auto root = static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(rows))));
  std::uint64_t n = std::bit_ceil(root);
  n = std::clamp<std::uint64_t>(n, 128, 8192);
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(n, rows));
}

namespace {

// Nearest centroid, lowest id on ties.
std::uint32_t nearest(const std::vector<float>& centroids, std::uint32_t dim, std::uint32_t k,
                      std::span<const float> x, float* out_dist = nullptr) {
  std::uint32_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::uint32_t c = 0; c < k; ++c) {
    const float d = l2_sq(x, {centroids.data() + std::size_t{c} * dim, dim});
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (out_dist) *out_dist = best_d;
  return best;
}

std::vector<float> kmeanspp_init(const VectorSet& set, std::uint32_t k, std::mt19937_64& rng) {
  const std::uint32_t dim = set.dim();
  const std::size_t n = set.size();
  std::vector<float> centroids;
  centroids.reserve(std::size_t{k} * dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::size_t pick = rng() % n;
  for (std::uint32_t c = 0; c < k; ++c) {
    chosen[pick] = 1;
    const auto row = set.row(pick);
    centroids.insert(centroids.end(), row.begin(), row.end());
    if (c + 1 == k) break;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], static_cast<double>(l2_sq(set.row(i), row)));
      if (!chosen[i]) total += d2[i];
    }
    if (total <= 0) {
      // Remaining rows duplicate chosen centers; take the first unchosen.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
      continue;
    }
    const double target = unit(rng) * total;
    double acc = 0;
    pick = n;
    std::size_t last_unchosen = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) continue;
      last_unchosen = i;
      acc += d2[i];
      if (acc >= target && d2[i] > 0) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_unchosen;
  }
  return centroids;
}

}  // namespace

IvfIndex IvfIndex::build(std::shared_ptr<const VectorSet> vectors, const IvfParams& params) {
  if (!vectors || vectors->empty()) throw std::invalid_argument("ivf_build: empty vector set");
  const auto& set = *vectors;
  const std::uint32_t k = params.nlist;
  if (k == 0 || k > set.size()) {
    throw std::invalid_argument("ivf_build: nlist must be in [1, count]; got " + std::to_string(k) + " for " +
                                std::to_string(set.size()) + " vectors");
  }
  if (params.max_iters == 0) throw std::invalid_argument("ivf_build: max_iters must be >= 1");
  const std::uint32_t dim = set.dim();
  const std::size_t n = set.size();

  std::mt19937_64 rng(params.seed);
  std::vector<float> centroids = kmeanspp_init(set, k, rng);
  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());

  for (std::uint32_t iter = 0; iter < params.max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = nearest(centroids, dim, k, set.row(i));
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<double> sums(std::size_t{k} * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = set.row(i);
      double* s = sums.data() + std::size_t{assign[i]} * dim;
      for (std::uint32_t d = 0; d < dim; ++d) s[d] += row[d];
      ++counts[assign[i]];
    }
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::uint32_t d = 0; d < dim; ++d) {
        centroids[std::size_t{c} * dim + d] = static_cast<float>(sums[std::size_t{c} * dim + d] / counts[c]);
      }
    }
    // Empty clusters take the member of the largest cluster farthest from its centroid.
    for (std::uint32_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      const auto largest = static_cast<std::uint32_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      if (counts[largest] < 2) break;
      std::size_t far = n;
      float far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const float d = l2_sq(set.row(i), {centroids.data() + std::size_t{largest} * dim, dim});
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      const auto row = set.row(far);
      std::copy(row.begin(), row.end(), centroids.begin() + static_cast<std::ptrdiff_t>(std::size_t{c} * dim));
      assign[far] = c;
      --counts[largest];
      counts[c] = 1;
    }
  }

  IvfIndex idx;
  idx.vectors_ = std::move(vectors);
  idx.params_ = params;
  idx.lists_.assign(k, {});
  for (std::size_t i = 0; i < n; ++i) {
    idx.lists_[nearest(centroids, dim, k, idx.vectors_->row(i))].push_back(static_cast<std::uint32_t>(i));
  }
  idx.centroids_ = VectorSet(dim, std::move(centroids));
  return idx;
}

std::vector<ClusterId> IvfIndex::select_lists(std::span<const float> q, std::size_t nprobe) const {
  if (nprobe == 0 || nprobe > nlist()) throw std::invalid_argument("ivf_select_lists: nprobe out of range");
  auto hits = brute_force_topk(centroids_, q, nprobe);
  std::vector<ClusterId> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(h.id);
  return out;
}

ListScanOutcome IvfIndex::scan_list(ClusterId cluster, std::span<const float> q, std::size_t k) const {
  if (cluster >= nlist()) throw std::out_of_range("ivf_scan_list: invalid cluster id " + std::to_string(cluster));
  if (k == 0) throw std::invalid_argument("ivf_scan_list: k must be >= 1");
  const auto& rows = lists_[cluster];
  const auto& set = *vectors_;
  ListScanOutcome out;
  TopK top(k);
  for (std::uint32_t r : rows) top.push({set.id(r), l2_sq(set.row(r), q)});
  out.local_hits = top.extract();
  out.scanned = rows.size();
  return out;
}

std::vector<Hit> IvfIndex::search(std::span<const float> q, std::size_t k, std::size_t nprobe) const {
  std::vector<std::vector<Hit>> parts;
  for (ClusterId c : select_lists(q, nprobe)) parts.push_back(scan_list(c, q, k).local_hits);
  return merge_topk(parts, k);
}

std::vector<Hit> merge_topk(const std::vector<std::vector<Hit>>& parts, std::size_t k) {
  struct Head {
    Hit hit;
    std::size_t part;
    std::size_t pos;
  };
  auto later = [](const Head& a, const Head& b) { return hit_less(b.hit, a.hit); };
  std::priority_queue<Head, std::vector<Head>, decltype(later)> heads(later);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (!parts[p].empty()) heads.push({parts[p][0], p, 0});
  }
  std::vector<Hit> out;
  while (out.size() < k && !heads.empty()) {
    Head h = heads.top();
    heads.pop();
    out.push_back(h.hit);
    if (h.pos + 1 < parts[h.part].size()) heads.push({parts[h.part][h.pos + 1], h.part, h.pos + 1});
  }
  return out;
}

std::size_t calibrate_nprobe(const IvfIndex& index, const VectorSet& queries, std::size_t k, double target) {
  if (queries.empty()) return 1;
  std::vector<std::vector<Hit>> truth;
  truth.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) truth.push_back(brute_force_topk(index.vectors(), queries.row(i), k));
  auto mean_recall = [&](std::size_t nprobe) {
    double sum = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) sum += recall_at_k(index.search(queries.row(i), k, nprobe), truth[i]);
    return sum / static_cast<double>(queries.size());
  };
  std::size_t lo = 1, hi = index.nlist();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (mean_recall(mid) >= target) hi = mid; else lo = mid + 1;
  }
  return lo;
}

}  // namespace ccdorch
