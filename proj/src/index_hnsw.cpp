#include "ccdorch/index_hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <stdexcept>

namespace ccdorch {

// Generation-tagged marks so a search never clears O(n) state. `visited` is
// reset per layer, `touched` once per query (distinct-node accounting).
class HnswIndex::SearchScratch {
 public:
  void begin_query(std::size_t n, bool record) {
    if (visited_.size() < n) {
      visited_.assign(n, 0);
      touched_.assign(n, 0);
      layer_gen_ = query_gen_ = 0;
    }
    if (++query_gen_ == 0) {
      std::fill(touched_.begin(), touched_.end(), 0);
      query_gen_ = 1;
    }
    count_ = 0;
    record_ = record;
    order_.clear();
  }
  void begin_layer() {
    if (++layer_gen_ == 0) {
      std::fill(visited_.begin(), visited_.end(), 0);
      layer_gen_ = 1;
    }
  }
  // Returns false when already visited in this layer.
  bool visit(std::uint32_t node) {
    if (visited_[node] == layer_gen_) return false;
    visited_[node] = layer_gen_;
    return true;
  }
  void touch(std::uint32_t node) {
    if (touched_[node] == query_gen_) return;
    touched_[node] = query_gen_;
    ++count_;
    if (record_) order_.push_back(node);
  }
  std::uint64_t touched_count() const { return count_; }
  std::vector<std::uint32_t> take_order() { return std::exchange(order_, {}); }

 private:
  std::vector<std::uint32_t> visited_;
  std::vector<std::uint32_t> touched_;
  std::uint32_t layer_gen_ = 0;
  std::uint32_t query_gen_ = 0;
  std::uint64_t count_ = 0;
  bool record_ = false;
  std::vector<std::uint32_t> order_;
};

namespace {

struct CandLess {
  template <class C>
  bool operator()(const C& a, const C& b) const {
    return a.dist < b.dist || (a.dist == b.dist && a.node < b.node);
  }
};
struct CandGreater {
  template <class C>
  bool operator()(const C& a, const C& b) const {
    return CandLess{}(b, a);
  }
};

}  // namespace

HnswIndex HnswIndex::build(std::shared_ptr<const VectorSet> vectors, const HnswParams& params) {
  if (!vectors || vectors->empty()) throw std::invalid_argument("hnsw_build: empty vector set");
  if (params.M < 2) throw std::invalid_argument("hnsw_build: M must be >= 2");
  if (params.ef_construction < params.M) throw std::invalid_argument("hnsw_build: ef_construction must be >= M");

  HnswIndex idx;
  idx.vectors_ = std::move(vectors);
  idx.params_ = params;
  const auto& set = *idx.vectors_;
  const std::size_t n = set.size();
  idx.links_.resize(n);

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double level_mult = 1.0 / std::log(static_cast<double>(params.M));

  SearchScratch scratch;
  for (std::uint32_t node = 0; node < n; ++node) {
    const double u = std::max(unit(rng), 1e-12);
    const int level = static_cast<int>(std::floor(-std::log(u) * level_mult));
    idx.links_[node].resize(static_cast<std::size_t>(level) + 1);
    if (node == 0) {
      idx.entry_ = 0;
      idx.max_level_ = level;
      continue;
    }
    const auto q = set.row(node);
    scratch.begin_query(n, false);
    Candidate cur{l2_sq(q, set.row(idx.entry_)), idx.entry_};
    for (int lev = idx.max_level_; lev > level; --lev) cur = idx.greedy_descend(q, cur, lev, scratch);

    std::vector<Candidate> entries{cur};
    for (int lev = std::min(level, idx.max_level_); lev >= 0; --lev) {
      auto found = idx.search_layer(q, entries, params.ef_construction, lev, scratch);
      idx.connect(node, lev, found);
      entries = std::move(found);
    }
    if (level > idx.max_level_) {
      idx.max_level_ = level;
      idx.entry_ = node;
    }
  }
  return idx;
}

HnswIndex::Candidate HnswIndex::greedy_descend(std::span<const float> q, Candidate cur, int level,
                                               SearchScratch& scratch) const {
  const auto& set = *vectors_;
  scratch.touch(cur.node);
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::uint32_t nb : links_[cur.node][level]) {
      scratch.touch(nb);
      const float d = l2_sq(q, set.row(nb));
      if (CandLess{}(Candidate{d, nb}, cur)) {
        cur = {d, nb};
        moved = true;
      }
    }
  }
  return cur;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q,
                                                          const std::vector<Candidate>& entries, std::size_t ef,
                                                          int level, SearchScratch& scratch) const {
  const auto& set = *vectors_;
  scratch.begin_layer();
  std::priority_queue<Candidate, std::vector<Candidate>, CandGreater> frontier;  // closest first
  std::priority_queue<Candidate, std::vector<Candidate>, CandLess> best;         // farthest first
  for (const auto& e : entries) {
    if (!scratch.visit(e.node)) continue;
    scratch.touch(e.node);
    frontier.push(e);
    best.push(e);
    if (best.size() > ef) best.pop();
  }
  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (best.size() >= ef && CandLess{}(best.top(), c)) break;
    frontier.pop();
    for (std::uint32_t nb : links_[c.node][level]) {
      if (!scratch.visit(nb)) continue;
      scratch.touch(nb);
      const Candidate cand{l2_sq(q, set.row(nb)), nb};
      if (best.size() < ef || CandLess{}(cand, best.top())) {
        frontier.push(cand);
        best.push(cand);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Candidate> out(best.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = best.top();
    best.pop();
  }
  return out;  // ascending
}

void HnswIndex::connect(std::uint32_t node, int level, const std::vector<Candidate>& found) {
  auto& mine = links_[node][level];
  const std::size_t keep = std::min<std::size_t>(params_.M, found.size());
  for (std::size_t i = 0; i < keep; ++i) mine.push_back(found[i].node);
  for (std::size_t i = 0; i < keep; ++i) {
    const std::uint32_t nb = found[i].node;
    links_[nb][level].push_back(node);
    if (links_[nb][level].size() > max_degree(level)) shrink(nb, level);
  }
}

void HnswIndex::shrink(std::uint32_t node, int level) {
  const auto& set = *vectors_;
  auto& adj = links_[node][level];
  std::vector<Candidate> cands;
  cands.reserve(adj.size());
  for (std::uint32_t nb : adj) cands.push_back({l2_sq(set.row(node), set.row(nb)), nb});
  std::sort(cands.begin(), cands.end(), CandLess{});
  adj.clear();
  for (std::size_t i = 0; i < max_degree(level); ++i) adj.push_back(cands[i].node);
}

HnswSearchOutcome HnswIndex::search(std::span<const float> q, std::size_t k, std::size_t ef_search,
                                    bool record_touched) const {
  if (k == 0) throw std::invalid_argument("hnsw_search: k must be >= 1");
  if (q.size() != vectors_->dim()) throw std::invalid_argument("hnsw_search: query dimension mismatch");
  thread_local SearchScratch scratch;
  const auto& set = *vectors_;
  scratch.begin_query(set.size(), record_touched);

  Candidate cur{l2_sq(q, set.row(entry_)), entry_};
  for (int lev = max_level_; lev > 0; --lev) cur = greedy_descend(q, cur, lev, scratch);
  auto found = search_layer(q, {cur}, std::max(ef_search, k), 0, scratch);

  HnswSearchOutcome out;
  const std::size_t take = std::min(k, found.size());
  out.hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.hits.push_back({set.id(found[i].node), found[i].dist});
  std::sort(out.hits.begin(), out.hits.end(), hit_less);
  out.nodes_touched = scratch.touched_count();
  if (record_touched) out.touched = scratch.take_order();
  return out;
}

bool HnswIndex::same_structure(const HnswIndex& other) const {
  return entry_ == other.entry_ && max_level_ == other.max_level_ && links_ == other.links_;
}

std::size_t calibrate_ef_search(const HnswIndex& index, const VectorSet& queries, std::size_t k, double target,
                                std::size_t ef_max) {
  if (queries.empty()) return k;
  std::vector<std::vector<Hit>> truth;
  truth.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) truth.push_back(brute_force_topk(index.vectors(), queries.row(i), k));
  auto mean_recall = [&](std::size_t ef) {
    double sum = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) sum += recall_at_k(index.search(queries.row(i), k, ef).hits, truth[i]);
    return sum / static_cast<double>(queries.size());
  };
  std::size_t lo = k, hi = std::max(ef_max, k);
  if (mean_recall(hi) < target) return hi;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (mean_recall(mid) >= target) hi = mid; else lo = mid + 1;
  }
  return lo;
}

}  // namespace ccdorch
