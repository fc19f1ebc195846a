#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccdorch {

using VectorId = std::uint32_t;

// Bytes per stored element. Vectors are FP32 throughout.
inline constexpr std::uint64_t kElementBytes = 4;

// Dense row-major FP32 vectors with external ids (0..count-1 unless given).
class VectorSet {
 public:
  VectorSet() = default;
  VectorSet(std::uint32_t dim, std::vector<float> data);
  VectorSet(std::uint32_t dim, std::vector<float> data, std::vector<VectorId> ids);

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::uint64_t row_bytes() const { return std::uint64_t{dim_} * kElementBytes; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  // Bounds-checked row access; throws std::out_of_range.
  std::span<const float> row_checked(std::size_t i) const;
  VectorId id(std::size_t i) const { return ids_[i]; }
  const std::vector<float>& data() const { return data_; }
  const std::vector<VectorId>& ids() const { return ids_; }

  bool operator==(const VectorSet&) const = default;

 private:
  std::uint32_t dim_ = 0;
  std::vector<float> data_;
  std::vector<VectorId> ids_;
};

struct Hit {
  VectorId id = 0;
  float dist = 0.0f;  // squared L2

  bool operator==(const Hit&) const = default;
};

// Ascending by distance, then id.
inline bool hit_less(const Hit& a, const Hit& b) {
  return a.dist < b.dist || (a.dist == b.dist && a.id < b.id);
}

// Bounded max-heap keeping the k best hits seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k);

  void push(Hit h);
  std::size_t size() const { return heap_.size(); }
  std::size_t capacity() const { return k_; }
  bool full() const { return heap_.size() == k_; }
  // Worst retained hit; only meaningful when non-empty.
  const Hit& worst() const { return heap_.front(); }
  // Sorted ascending by (dist, id); leaves the container empty.
  std::vector<Hit> extract();

 private:
  std::size_t k_;
  std::vector<Hit> heap_;
};

float l2_sq_scalar(std::span<const float> a, std::span<const float> b);
// Unrolled kernel; equal to the scalar reference within float reassociation error.
float l2_sq(std::span<const float> a, std::span<const float> b);

std::vector<Hit> brute_force_topk(const VectorSet& set, std::span<const float> q, std::size_t k);

double recall_at_k(const std::vector<Hit>& approx, const std::vector<Hit>& exact);

// Binary dataset file: little-endian u32 dim, u64 count, count*dim f32.
void write_dataset(const std::string& path, const VectorSet& set);
VectorSet read_dataset(const std::string& path);

struct MixtureSpec {
  std::uint32_t dim = 64;
  std::size_t count = 10000;
  std::uint32_t components = 16;
  float center_spread = 10.0f;  // stddev of component centers
  float component_sigma = 1.0f;
  std::uint64_t seed = 1;
};

// Gaussian-mixture synthetic vectors; deterministic for a seed.
VectorSet generate_mixture(const MixtureSpec& spec);

}  // namespace ccdorch
