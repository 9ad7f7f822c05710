#pragma once

#include <compare>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "telops/common.hpp"

namespace telops {

enum class DeviceKind { CoreRouter, AggSwitch, BaseStation, Server };

std::string_view to_string(DeviceKind kind);
DeviceKind parse_device_kind(std::string_view text);

struct Device {
  DeviceId id = 0;
  DeviceKind kind = DeviceKind::BaseStation;
  int vendor = 0;

  friend bool operator==(const Device&, const Device&) = default;
};

// Undirected link, stored with a <= b.
struct Link {
  DeviceId a = 0;
  DeviceId b = 0;

  static Link between(DeviceId x, DeviceId y) { return x <= y ? Link{x, y} : Link{y, x}; }
  friend auto operator<=>(const Link&, const Link&) = default;
};

// Device/link graph of a managed network. Holds whatever it is given so that
// validate() can report violations; generators only ever produce valid graphs.
class TopologyGraph {
 public:
  TopologyGraph() = default;
  TopologyGraph(std::vector<Device> devices, std::vector<Link> links);

  const std::vector<Device>& devices() const { return devices_; }
  const std::vector<Link>& links() const { return links_; }
  std::size_t size() const { return devices_.size(); }

  bool contains(DeviceId id) const { return index_.contains(id); }
  const Device& device(DeviceId id) const;
  // Neighbour ids in ascending order (deduplicated).
  const std::vector<DeviceId>& neighbors(DeviceId id) const;
  bool connected() const;

  friend bool operator==(const TopologyGraph& x, const TopologyGraph& y) {
    return x.devices_ == y.devices_ && x.links_ == y.links_;
  }

 private:
  std::vector<Device> devices_;
  std::vector<Link> links_;
  std::unordered_map<DeviceId, std::size_t> index_;
  std::vector<std::vector<DeviceId>> adjacency_;
};

struct TopologySpec {
  int n_core = 2;
  int n_agg = 4;
  int n_bs = 16;
  double cross_link_prob = 0.2;
  std::uint64_t seed = 0;
};

// Three-tier mobile access network: a ring of core routers, aggregation
// switches homed on a core router, base stations homed on one aggregation
// switch, plus random agg-agg cross links.
TopologyGraph generate_man_topology(const TopologySpec& spec);

// Bridge edges: links whose removal disconnects the graph.
std::set<Link> find_weak_links(const TopologyGraph& g);

// Every violated invariant as a message; empty iff the graph is valid.
std::vector<std::string> validate(const TopologyGraph& g);

std::string topology_to_json(const TopologyGraph& g);
TopologyGraph topology_from_json(std::string_view text);

}  // namespace telops
