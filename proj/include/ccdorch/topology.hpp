#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccdorch {

using CoreId = std::uint32_t;
using CcdId = std::uint32_t;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CCD layout of one processor. Cores are identified by dense ids; each CCD
// owns a disjoint, non-empty list of cores that share one L3.
class Topology {
 public:
  Topology() = default;

  // Validates and builds the core->CCD index. CCD ids are the positions in
  // `ccds`. Throws TopologyError on an empty CCD, a duplicated core or a
  // core id outside [0, total cores).
  explicit Topology(std::vector<std::vector<CoreId>> ccds);

  // `ccd_count` CCDs of `cores_per_ccd` cores each, numbered contiguously.
  static Topology synthetic(std::uint32_t ccd_count, std::uint32_t cores_per_ccd);

  std::uint32_t ccd_count() const { return static_cast<std::uint32_t>(ccds_.size()); }
  std::uint32_t core_count() const { return static_cast<std::uint32_t>(core_to_ccd_.size()); }
  const std::vector<CoreId>& cores_of(CcdId ccd) const { return ccds_.at(ccd); }
  const std::vector<std::vector<CoreId>>& ccds() const { return ccds_; }
  CcdId ccd_of(CoreId core) const { return core_to_ccd_.at(core); }

  // Human-readable shape, e.g. "12x8" for uniform layouts, "3ccd/10core" otherwise.
  std::string describe() const;

  std::string to_json() const;
  static Topology from_json(const std::string& text);

  bool operator==(const Topology&) const = default;

 private:
  std::vector<std::vector<CoreId>> ccds_;
  std::vector<CcdId> core_to_ccd_;
};

// Per-core neighbor sets: `intra[i]` are the other cores sharing i's CCD,
// `cross[i]` every core on another CCD, grouped by CCD starting after i's
// own CCD (wrapping around) with ascending core ids inside each group.
struct NeighborSets {
  std::vector<std::vector<CoreId>> intra;
  std::vector<std::vector<CoreId>> cross;

  bool operator==(const NeighborSets&) const = default;
};

NeighborSets neighbor_sets(const Topology& t);

// Accepts "auto", "sim:<ccds>x<cores>" or "file:<path>".
Topology load_topology(const std::string& source);

// Best-effort detection from Linux sysfs L3 sharing lists. Falls back to one
// CCD spanning every online core (with a warning on stderr) when the L3
// layout cannot be read.
Topology detect_topology();

// Parses the text of a /sys cpulist ("0-3,8,10-11").
std::vector<CoreId> parse_cpu_list(const std::string& text);

}  // namespace ccdorch
