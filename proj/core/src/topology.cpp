#include "telops/topology.hpp"

#include <algorithm>
#include <map>

#include "json.hpp"

namespace telops {

using nlohmann::json;

std::string_view to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::CoreRouter: return "CoreRouter";
    case DeviceKind::AggSwitch: return "AggSwitch";
    case DeviceKind::BaseStation: return "BaseStation";
    case DeviceKind::Server: return "Server";
  }
  return "?";
}

DeviceKind parse_device_kind(std::string_view text) {
  if (text == "CoreRouter") return DeviceKind::CoreRouter;
  if (text == "AggSwitch") return DeviceKind::AggSwitch;
  if (text == "BaseStation") return DeviceKind::BaseStation;
  if (text == "Server") return DeviceKind::Server;
  throw FormatError("unknown device kind '" + std::string(text) + "'");
}

TopologyGraph::TopologyGraph(std::vector<Device> devices, std::vector<Link> links)
    : devices_(std::move(devices)), links_(std::move(links)) {
  for (auto& l : links_) l = Link::between(l.a, l.b);
  for (std::size_t i = 0; i < devices_.size(); ++i) index_.emplace(devices_[i].id, i);
  adjacency_.resize(devices_.size());
  for (const auto& l : links_) {
    if (l.a == l.b) continue;
    auto ia = index_.find(l.a);
    auto ib = index_.find(l.b);
    if (ia == index_.end() || ib == index_.end()) continue;
    adjacency_[ia->second].push_back(l.b);
    adjacency_[ib->second].push_back(l.a);
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
  }
}

const Device& TopologyGraph::device(DeviceId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("unknown device " + std::to_string(id));
  return devices_[it->second];
}

const std::vector<DeviceId>& TopologyGraph::neighbors(DeviceId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("unknown device " + std::to_string(id));
  return adjacency_[it->second];
}

bool TopologyGraph::connected() const {
  if (devices_.empty()) return true;
  std::vector<bool> seen(devices_.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    for (DeviceId n : adjacency_[i]) {
      std::size_t j = index_.at(n);
      if (!seen[j]) {
        seen[j] = true;
        ++reached;
        stack.push_back(j);
      }
    }
  }
  return reached == devices_.size();
}

TopologyGraph generate_man_topology(const TopologySpec& spec) {
  if (spec.n_core < 1 || spec.n_agg < 1 || spec.n_bs < 1) {
    throw InvalidArgument("topology tier counts must be >= 1");
  }
  if (!(spec.cross_link_prob >= 0.0 && spec.cross_link_prob <= 1.0)) {
    throw InvalidArgument("cross_link_prob must lie in [0, 1]");
  }
  Rng rng(spec.seed);
  std::vector<Device> devices;
  DeviceId next = 0;
  auto add = [&](DeviceKind kind) {
    devices.push_back({next, kind, static_cast<int>(rng.below(3))});
    return next++;
  };
  std::vector<DeviceId> cores, aggs, stations;
  for (int i = 0; i < spec.n_core; ++i) cores.push_back(add(DeviceKind::CoreRouter));
  for (int i = 0; i < spec.n_agg; ++i) aggs.push_back(add(DeviceKind::AggSwitch));
  for (int i = 0; i < spec.n_bs; ++i) stations.push_back(add(DeviceKind::BaseStation));

  std::vector<Link> links;
  if (cores.size() == 2) {
    links.push_back(Link::between(cores[0], cores[1]));
  } else if (cores.size() > 2) {
    for (std::size_t i = 0; i < cores.size(); ++i) {
      links.push_back(Link::between(cores[i], cores[(i + 1) % cores.size()]));
    }
  }
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    links.push_back(Link::between(aggs[i], cores[i % cores.size()]));
  }
  for (std::size_t i = 0; i < stations.size(); ++i) {
    links.push_back(Link::between(stations[i], aggs[i % aggs.size()]));
  }
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    for (std::size_t j = i + 1; j < aggs.size(); ++j) {
      if (rng.bernoulli(spec.cross_link_prob)) links.push_back(Link::between(aggs[i], aggs[j]));
    }
  }
  return TopologyGraph(std::move(devices), std::move(links));
}

std::set<Link> find_weak_links(const TopologyGraph& g) {
  if (!g.connected()) throw InvalidArgument("find_weak_links: topology is disconnected");
  const auto& devices = g.devices();
  const std::size_t n = devices.size();
  std::unordered_map<DeviceId, std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) idx.emplace(devices[i].id, i);

  std::set<Link> bridges;
  if (n == 0) return bridges;
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;

  // Iterative Tarjan bridge search; frames hold (vertex, parent, next neighbour).
  struct Frame {
    std::size_t v;
    std::size_t parent;
    std::size_t next;
  };
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<Frame> stack;
  stack.push_back({0, kNone, 0});
  disc[0] = low[0] = timer++;
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& adj = g.neighbors(devices[f.v].id);
    if (f.next < adj.size()) {
      std::size_t w = idx.at(adj[f.next++]);
      if (w == f.parent) continue;
      if (disc[w] < 0) {
        disc[w] = low[w] = timer++;
        stack.push_back({w, f.v, 0});
      } else {
        low[f.v] = std::min(low[f.v], disc[w]);
      }
      continue;
    }
    const Frame done = f;
    stack.pop_back();
    if (done.parent != kNone) {
      low[done.parent] = std::min(low[done.parent], low[done.v]);
      if (low[done.v] > disc[done.parent]) {
        bridges.insert(Link::between(devices[done.parent].id, devices[done.v].id));
      }
    }
  }
  return bridges;
}

std::vector<std::string> validate(const TopologyGraph& g) {
  std::vector<std::string> violations;
  std::set<DeviceId> ids;
  for (const auto& d : g.devices()) {
    if (!ids.insert(d.id).second) {
      violations.push_back("duplicate device id " + std::to_string(d.id));
    }
  }
  std::set<Link> seen;
  for (const auto& l : g.links()) {
    const std::string tag = std::to_string(l.a) + "-" + std::to_string(l.b);
    if (l.a == l.b) violations.push_back("self-loop at " + std::to_string(l.a));
    if (!ids.contains(l.a) || !ids.contains(l.b)) {
      violations.push_back("link endpoint missing for " + tag);
    }
    if (!seen.insert(l).second) violations.push_back("duplicate link " + tag);
  }
  if (!g.connected()) violations.push_back("disconnected");
  return violations;
}

std::string topology_to_json(const TopologyGraph& g) {
  json devices = json::array();
  for (const auto& d : g.devices()) {
    devices.push_back({{"id", d.id}, {"kind", std::string(to_string(d.kind))}, {"vendor", d.vendor}});
  }
  json links = json::array();
  for (const auto& l : g.links()) links.push_back(json::array({l.a, l.b}));
  json doc;
  doc["devices"] = std::move(devices);
  doc["links"] = std::move(links);
  return doc.dump(2) + "\n";
}

TopologyGraph topology_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    std::vector<Device> devices;
    for (const auto& d : doc.at("devices")) {
      devices.push_back({d.at("id").get<DeviceId>(),
                         parse_device_kind(d.at("kind").get<std::string>()),
                         d.at("vendor").get<int>()});
    }
    std::vector<Link> links;
    for (const auto& l : doc.at("links")) {
      if (!l.is_array() || l.size() != 2) throw FormatError("link must be a pair of ids");
      links.push_back({l[0].get<DeviceId>(), l[1].get<DeviceId>()});
    }
    return TopologyGraph(std::move(devices), std::move(links));
  } catch (const json::exception& e) {
    throw FormatError(std::string("topology file: ") + e.what());
  }
}

}  // namespace telops
