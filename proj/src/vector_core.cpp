#include "ccdorch/vector_core.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <unordered_set>

namespace ccdorch {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

VectorSet::VectorSet(std::uint32_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
  if (dim_ == 0) throw std::invalid_argument("VectorSet: dim must be positive");
  if (data_.size() % dim_ != 0) throw std::invalid_argument("VectorSet: data length is not a multiple of dim");
  ids_.resize(data_.size() / dim_);
  for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = static_cast<VectorId>(i);
}

VectorSet::VectorSet(std::uint32_t dim, std::vector<float> data, std::vector<VectorId> ids)
    : VectorSet(dim, std::move(data)) {
  if (ids.size() != ids_.size()) throw std::invalid_argument("VectorSet: ids length differs from row count");
  ids_ = std::move(ids);
}

std::span<const float> VectorSet::row_checked(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("VectorSet: row " + std::to_string(i) + " >= " + std::to_string(size()));
  return row(i);
}

TopK::TopK(std::size_t k) : k_(k) {
  if (k == 0) throw std::invalid_argument("TopK: k must be >= 1");
  heap_.reserve(k + 1);
}

void TopK::push(Hit h) {
  if (heap_.size() < k_) {
    heap_.push_back(h);
    std::push_heap(heap_.begin(), heap_.end(), hit_less);
  } else if (hit_less(h, heap_.front())) {
    std::pop_heap(heap_.begin(), heap_.end(), hit_less);
    heap_.back() = h;
    std::push_heap(heap_.begin(), heap_.end(), hit_less);
  }
}

std::vector<Hit> TopK::extract() {
  std::sort_heap(heap_.begin(), heap_.end(), hit_less);
  return std::exchange(heap_, {});
}

float l2_sq_scalar(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("l2_sq: dimension mismatch");
  float sum = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

float l2_sq(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("l2_sq: dimension mismatch");
  const float* pa = a.data();
  const float* pb = b.data();
  const std::size_t n = a.size();
  // Eight independent accumulators let the compiler vectorize without -ffast-math.
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) {
      float d = pa[i + j] - pb[i + j];
      acc[j] += d * d;
    }
  }
  float sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
  for (; i < n; ++i) {
    float d = pa[i] - pb[i];
    sum += d * d;
  }
  return sum;
}

std::vector<Hit> brute_force_topk(const VectorSet& set, std::span<const float> q, std::size_t k) {
  if (set.empty()) throw std::invalid_argument("brute_force_topk: empty vector set");
  if (k == 0) throw std::invalid_argument("brute_force_topk: k must be >= 1");
  TopK top(std::min(k, set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) top.push({set.id(i), l2_sq(set.row(i), q)});
  return top.extract();
}

double recall_at_k(const std::vector<Hit>& approx, const std::vector<Hit>& exact) {
  if (exact.empty()) return 1.0;
  std::unordered_set<VectorId> truth;
  for (const auto& h : exact) truth.insert(h.id);
  std::size_t shared = 0;
  for (const auto& h : approx) shared += truth.count(h.id);
  return static_cast<double>(shared) / static_cast<double>(exact.size());
}

void write_dataset(const std::string& path, const VectorSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_dataset: cannot open '" + path + "'");
  std::uint32_t dim = set.dim();
  std::uint64_t count = set.size();
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(set.data().data()),
            static_cast<std::streamsize>(set.data().size() * sizeof(float)));
  if (!out) throw std::runtime_error("write_dataset: write failed for '" + path + "'");
}

VectorSet read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_dataset: cannot open '" + path + "'");
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || dim == 0) throw std::runtime_error("read_dataset: bad header in '" + path + "'");
  std::vector<float> data(count * dim);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw std::runtime_error("read_dataset: truncated payload in '" + path + "'");
  return VectorSet(dim, std::move(data));
}

VectorSet generate_mixture(const MixtureSpec& spec) {
  if (spec.dim == 0 || spec.components == 0) throw std::invalid_argument("generate_mixture: dim and components must be positive");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<float> center_dist(0.0f, spec.center_spread);
  std::normal_distribution<float> noise(0.0f, spec.component_sigma);
  std::vector<float> centers(std::size_t{spec.components} * spec.dim);
  for (auto& c : centers) c = center_dist(rng);
  std::vector<float> data(spec.count * spec.dim);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t comp = rng() % spec.components;
    for (std::uint32_t d = 0; d < spec.dim; ++d) {
      data[i * spec.dim + d] = centers[comp * spec.dim + d] + noise(rng);
    }
  }
  return VectorSet(spec.dim, std::move(data));
}

}  // namespace ccdorch
