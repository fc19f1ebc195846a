#include "ccdorch/topology.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace ccdorch {

namespace fs = std::filesystem;
using json = nlohmann::json;

Topology::Topology(std::vector<std::vector<CoreId>> ccds) : ccds_(std::move(ccds)) {
  if (ccds_.empty()) throw TopologyError("topology: at least one CCD is required");
  std::size_t total = 0;
  for (std::size_t c = 0; c < ccds_.size(); ++c) {
    if (ccds_[c].empty()) throw TopologyError("topology: CCD " + std::to_string(c) + " has no cores");
    total += ccds_[c].size();
  }
  constexpr CcdId kUnset = ~CcdId{0};
  core_to_ccd_.assign(total, kUnset);
  for (std::size_t c = 0; c < ccds_.size(); ++c) {
    for (CoreId core : ccds_[c]) {
      if (core >= total) {
        throw TopologyError("topology: core id " + std::to_string(core) + " out of range [0, " +
                            std::to_string(total) + ")");
      }
      if (core_to_ccd_[core] != kUnset) {
        throw TopologyError("topology: core " + std::to_string(core) + " listed in more than one CCD");
      }
      core_to_ccd_[core] = static_cast<CcdId>(c);
    }
    std::sort(ccds_[c].begin(), ccds_[c].end());
  }
}

Topology Topology::synthetic(std::uint32_t ccd_count, std::uint32_t cores_per_ccd) {
  if (ccd_count == 0 || cores_per_ccd == 0) {
    throw TopologyError("topology: synthetic layout needs ccds >= 1 and cores >= 1");
  }
  std::vector<std::vector<CoreId>> ccds(ccd_count);
  CoreId next = 0;
  for (auto& ccd : ccds) {
    for (std::uint32_t i = 0; i < cores_per_ccd; ++i) ccd.push_back(next++);
  }
  return Topology(std::move(ccds));
}

std::string Topology::describe() const {
  bool uniform = std::all_of(ccds_.begin(), ccds_.end(),
                             [&](const auto& c) { return c.size() == ccds_.front().size(); });
  if (uniform) return std::to_string(ccds_.size()) + "x" + std::to_string(ccds_.front().size());
  return std::to_string(ccds_.size()) + "ccd/" + std::to_string(core_count()) + "core";
}

std::string Topology::to_json() const {
  json doc;
  doc["ccds"] = json::array();
  for (std::size_t c = 0; c < ccds_.size(); ++c) {
    doc["ccds"].push_back({{"id", c}, {"cores", ccds_[c]}});
  }
  return doc.dump(2);
}

Topology Topology::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw TopologyError(std::string("topology config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("ccds")) throw TopologyError("topology config: missing field 'ccds'");
  const auto& arr = doc["ccds"];
  if (!arr.is_array()) throw TopologyError("topology config: field 'ccds' must be an array");

  std::map<std::int64_t, std::vector<CoreId>> by_id;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& entry = arr[i];
    const std::string where = "ccds[" + std::to_string(i) + "]";
    if (!entry.is_object()) throw TopologyError("topology config: " + where + " must be an object");
    if (!entry.contains("id") || !entry["id"].is_number_integer()) {
      throw TopologyError("topology config: " + where + ".id missing or not an integer");
    }
    if (!entry.contains("cores") || !entry["cores"].is_array()) {
      throw TopologyError("topology config: " + where + ".cores missing or not an array");
    }
    std::vector<CoreId> cores;
    for (const auto& c : entry["cores"]) {
      if (!c.is_number_integer() || c.get<std::int64_t>() < 0) {
        throw TopologyError("topology config: " + where + ".cores holds a non-integer or negative core id");
      }
      cores.push_back(c.get<CoreId>());
    }
    auto id = entry["id"].get<std::int64_t>();
    if (!by_id.emplace(id, std::move(cores)).second) {
      throw TopologyError("topology config: " + where + ".id duplicates CCD id " + std::to_string(id));
    }
  }
  std::vector<std::vector<CoreId>> ccds;
  std::int64_t expect = 0;
  for (auto& [id, cores] : by_id) {
    if (id != expect) throw TopologyError("topology config: ccds[].id must be dense from 0; missing " + std::to_string(expect));
    ccds.push_back(std::move(cores));
    ++expect;
  }
  return Topology(std::move(ccds));
}

NeighborSets neighbor_sets(const Topology& t) {
  NeighborSets out;
  const auto n = t.core_count();
  const auto m = t.ccd_count();
  out.intra.resize(n);
  out.cross.resize(n);
  for (CoreId i = 0; i < n; ++i) {
    const CcdId own = t.ccd_of(i);
    for (CoreId peer : t.cores_of(own)) {
      if (peer != i) out.intra[i].push_back(peer);
    }
    for (std::uint32_t step = 1; step < m; ++step) {
      const CcdId other = (own + step) % m;
      const auto& cores = t.cores_of(other);
      out.cross[i].insert(out.cross[i].end(), cores.begin(), cores.end());
    }
  }
  return out;
}

std::vector<CoreId> parse_cpu_list(const std::string& text) {
  std::vector<CoreId> cpus;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part.erase(std::remove_if(part.begin(), part.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }),
               part.end());
    if (part.empty()) continue;
    auto dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        cpus.push_back(static_cast<CoreId>(std::stoul(part)));
      } else {
        auto lo = std::stoul(part.substr(0, dash));
        auto hi = std::stoul(part.substr(dash + 1));
        for (auto c = lo; c <= hi; ++c) cpus.push_back(static_cast<CoreId>(c));
      }
    } catch (const std::exception&) {
      throw TopologyError("cpu list: cannot parse '" + part + "'");
    }
  }
  return cpus;
}

namespace {

Topology single_ccd_fallback(const std::string& reason) {
  auto n = std::max(1u, std::thread::hardware_concurrency());
  std::cerr << "warning: topology auto-detect failed (" << reason << "); using one CCD with " << n
            << " cores\n";
  return Topology::synthetic(1, n);
}

std::string read_trimmed(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

}  // namespace

Topology detect_topology() {
  const fs::path root = "/sys/devices/system/cpu";
  std::error_code ec;
  if (!fs::exists(root, ec)) return single_ccd_fallback("no sysfs cpu tree");

  std::set<CoreId> online;
  auto online_text = read_trimmed(root / "online");
  if (online_text.empty()) return single_ccd_fallback("cannot read online cpu list");
  try {
    for (auto c : parse_cpu_list(online_text)) online.insert(c);
  } catch (const TopologyError& e) {
    return single_ccd_fallback(e.what());
  }

  // Group online CPUs by the L3 they share.
  std::map<std::vector<CoreId>, std::vector<CoreId>> groups;
  for (CoreId cpu : online) {
    const fs::path cache = root / ("cpu" + std::to_string(cpu)) / "cache";
    std::vector<CoreId> shared;
    for (int idx = 0; idx < 8; ++idx) {
      const fs::path dir = cache / ("index" + std::to_string(idx));
      if (!fs::exists(dir, ec)) break;
      if (read_trimmed(dir / "level") != "3") continue;
      try {
        shared = parse_cpu_list(read_trimmed(dir / "shared_cpu_list"));
      } catch (const TopologyError&) {
        shared.clear();
      }
      break;
    }
    if (shared.empty()) return single_ccd_fallback("no L3 sharing info for cpu" + std::to_string(cpu));
    groups[shared].push_back(cpu);
  }

  // Worker core ids must be dense; only accept layouts where online CPUs are 0..n-1.
  if (online.empty() || *online.rbegin() + 1 != online.size()) {
    return single_ccd_fallback("online cpu ids are not contiguous");
  }
  std::vector<std::vector<CoreId>> ccds;
  for (auto& [key, cpus] : groups) ccds.push_back(std::move(cpus));
  std::sort(ccds.begin(), ccds.end());
  return Topology(std::move(ccds));
}

Topology load_topology(const std::string& source) {
  if (source == "auto") return detect_topology();
  if (source.rfind("sim:", 0) == 0) {
    const auto spec = source.substr(4);
    const auto x = spec.find('x');
    if (x == std::string::npos) throw TopologyError("topology source: expected sim:<ccds>x<cores>, got '" + source + "'");
    try {
      auto ccds = std::stoul(spec.substr(0, x));
      auto cores = std::stoul(spec.substr(x + 1));
      return Topology::synthetic(static_cast<std::uint32_t>(ccds), static_cast<std::uint32_t>(cores));
    } catch (const std::invalid_argument&) {
      throw TopologyError("topology source: expected sim:<ccds>x<cores>, got '" + source + "'");
    }
  }
  if (source.rfind("file:", 0) == 0) {
    std::ifstream in(source.substr(5));
    if (!in) throw TopologyError("topology source: cannot open '" + source.substr(5) + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return Topology::from_json(buf.str());
  }
  throw TopologyError("topology source: unknown form '" + source + "' (auto | sim:<c>x<n> | file:<path>)");
}

}  // namespace ccdorch
