#include "telops/association.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <tuple>
#include <unordered_map>

#include "json.hpp"

namespace telops {

using nlohmann::json;

namespace {

void normalize(DirectedGraph& g) {
  std::sort(g.vertices.begin(), g.vertices.end());
  g.vertices.erase(std::unique(g.vertices.begin(), g.vertices.end()), g.vertices.end());
  std::sort(g.edges.begin(), g.edges.end(), [](const DagEdge& x, const DagEdge& y) {
    return std::tie(x.from, x.to) < std::tie(y.from, y.to);
  });
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Strongly connected component id per vertex index (Tarjan, iterative).
std::vector<int> scc_ids(std::size_t n, const std::vector<std::vector<std::size_t>>& adj) {
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int counter = 0;
  int n_comp = 0;
  struct Frame {
    std::size_t v;
    std::size_t next;
  };
  for (std::size_t s = 0; s < n; ++s) {
    if (index[s] >= 0) continue;
    std::vector<Frame> call{{s, 0}};
    index[s] = low[s] = counter++;
    stack.push_back(s);
    on_stack[s] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      if (f.next < adj[f.v].size()) {
        std::size_t w = adj[f.v][f.next++];
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      const std::size_t v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = n_comp;
        } while (w != v);
        ++n_comp;
      }
    }
  }
  return comp;
}

}  // namespace

std::size_t CooccurrenceStats::pair(DeviceId u, DeviceId v) const {
  auto it = pair_count.find(u < v ? std::pair{u, v} : std::pair{v, u});
  return it == pair_count.end() ? 0 : it->second;
}

std::optional<std::vector<DeviceId>> topological_order(const DirectedGraph& g) {
  std::map<DeviceId, std::size_t> indeg;
  std::map<DeviceId, std::vector<DeviceId>> out;
  for (DeviceId v : g.vertices) indeg.emplace(v, 0);
  for (const auto& e : g.edges) {
    indeg[e.to]++;
    indeg.emplace(e.from, 0);
    out[e.from].push_back(e.to);
  }
  std::set<DeviceId> ready;
  for (const auto& [v, d] : indeg) {
    if (d == 0) ready.insert(v);
  }
  std::vector<DeviceId> order;
  while (!ready.empty()) {
    DeviceId v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (DeviceId w : out[v]) {
      if (--indeg[w] == 0) ready.insert(w);
    }
  }
  if (order.size() != indeg.size()) return std::nullopt;
  return order;
}

AssociationDag::AssociationDag(DirectedGraph g) : graph_(std::move(g)) {
  normalize(graph_);
  std::set<DeviceId> verts(graph_.vertices.begin(), graph_.vertices.end());
  for (std::size_t i = 0; i < graph_.edges.size(); ++i) {
    const auto& e = graph_.edges[i];
    if (e.from == e.to) throw InvalidArgument("association graph has a self-edge");
    if (!verts.contains(e.from) || !verts.contains(e.to)) {
      throw InvalidArgument("association edge endpoint is not a vertex");
    }
    if (!(e.confidence > 0.0 && e.confidence <= 1.0)) {
      throw InvalidArgument("association edge confidence outside (0, 1]");
    }
    if (i > 0 && graph_.edges[i - 1].from == e.from && graph_.edges[i - 1].to == e.to) {
      throw InvalidArgument("association graph has a duplicate edge");
    }
  }
  if (!topological_order(graph_)) throw InvalidArgument("association graph has a cycle");
}

std::uint64_t graph_hash(const DirectedGraph& g) {
  Fnv1a h;
  h.update_u64(g.vertices.size());
  for (DeviceId v : g.vertices) h.update_u64(static_cast<std::uint64_t>(v));
  h.update_u64(g.edges.size());
  for (const auto& e : g.edges) {
    h.update_u64(static_cast<std::uint64_t>(e.from));
    h.update_u64(static_cast<std::uint64_t>(e.to));
    h.update_f64(e.confidence);
  }
  return h.digest();
}

std::uint64_t AssociationDag::hash() const { return graph_hash(graph_); }

CooccurrenceStats mine_cooccurrence(const std::vector<DiagnosisSample>& samples) {
  if (samples.empty()) throw InvalidArgument("mine_cooccurrence needs at least one sample");
  CooccurrenceStats stats;
  stats.n_samples = samples.size();
  stats.first_time.reserve(samples.size());
  for (const auto& s : samples) {
    std::map<DeviceId, Timestamp> first;
    for (const auto& r : s.records) {
      if (!r.device_id || !r.timestamp) continue;
      auto [it, fresh] = first.emplace(*r.device_id, *r.timestamp);
      if (!fresh) it->second = std::min(it->second, *r.timestamp);
    }
    for (auto a = first.begin(); a != first.end(); ++a) {
      stats.device_count[a->first]++;
      for (auto b = std::next(a); b != first.end(); ++b) {
        stats.pair_count[{a->first, b->first}]++;
      }
    }
    stats.first_time.push_back(std::move(first));
  }
  return stats;
}

DirectedGraph candidate_edges(const CooccurrenceStats& stats, double min_support,
                              double min_confidence) {
  if (stats.n_samples == 0) throw InvalidArgument("build_dag: statistics cover zero samples");
  if (!(min_support > 0.0 && min_support <= 1.0) ||
      !(min_confidence > 0.0 && min_confidence <= 1.0)) {
    throw InvalidArgument("build_dag: thresholds must lie in (0, 1]");
  }
  const double n = static_cast<double>(stats.n_samples);
  DirectedGraph g;
  for (const auto& [d, c] : stats.device_count) g.vertices.push_back(d);

  for (const auto& [uv, count] : stats.pair_count) {
    if (static_cast<double>(count) / n < min_support) continue;
    const auto [a, b] = uv;
    std::vector<double> lag;  // first_time(b) - first_time(a)
    lag.reserve(count);
    for (const auto& ft : stats.first_time) {
      auto ia = ft.find(a);
      auto ib = ft.find(b);
      if (ia != ft.end() && ib != ft.end()) lag.push_back(static_cast<double>(ib->second - ia->second));
    }
    const double m = median(std::move(lag));
    // a < b; equal medians point the edge at the lower id.
    const DeviceId from = m > 0.0 ? a : b;
    const DeviceId to = m > 0.0 ? b : a;
    const double conf = static_cast<double>(count) / static_cast<double>(stats.device_count.at(from));
    if (conf < min_confidence) continue;
    g.edges.push_back({from, to, conf});
  }
  return g;
}

AssociationDag build_dag(const CooccurrenceStats& stats, double min_support,
                         double min_confidence) {
  AssociationDag dag = break_cycles(candidate_edges(stats, min_support, min_confidence));
  if (!topological_order(dag.graph())) throw std::logic_error("build_dag produced a cycle");
  return dag;
}

AssociationDag break_cycles(const DirectedGraph& input) {
  DirectedGraph g = input;
  normalize(g);
  for (const auto& e : g.edges) {
    if (!std::binary_search(g.vertices.begin(), g.vertices.end(), e.from)) g.vertices.push_back(e.from);
    if (!std::binary_search(g.vertices.begin(), g.vertices.end(), e.to)) g.vertices.push_back(e.to);
  }
  normalize(g);
  // Parallel edges collapse to their strongest copy.
  std::vector<DagEdge> unique_edges;
  for (const auto& e : g.edges) {
    if (!unique_edges.empty() && unique_edges.back().from == e.from && unique_edges.back().to == e.to) {
      unique_edges.back().confidence = std::max(unique_edges.back().confidence, e.confidence);
    } else {
      unique_edges.push_back(e);
    }
  }
  g.edges = std::move(unique_edges);
  std::unordered_map<DeviceId, std::size_t> idx;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) idx.emplace(g.vertices[i], i);

  while (true) {
    std::vector<std::vector<std::size_t>> adj(g.vertices.size());
    for (const auto& e : g.edges) adj[idx.at(e.from)].push_back(idx.at(e.to));
    const auto comp = scc_ids(g.vertices.size(), adj);
    // An edge lies on a cycle iff both endpoints share a component (self-edges
    // are always cycles).
    auto victim = g.edges.end();
    for (auto it = g.edges.begin(); it != g.edges.end(); ++it) {
      if (comp[idx.at(it->from)] != comp[idx.at(it->to)]) continue;
      if (victim == g.edges.end() ||
          std::tie(it->confidence, it->from, it->to) <
              std::tie(victim->confidence, victim->from, victim->to)) {
        victim = it;
      }
    }
    if (victim == g.edges.end()) break;
    g.edges.erase(victim);
  }
  return AssociationDag(std::move(g));
}

RecoveryScore dag_recovery_score(const AssociationDag& mined, const TopologyGraph& truth,
                                 const std::vector<FailureEpisode>& episodes) {
  for (DeviceId v : mined.vertices()) {
    if (!truth.contains(v)) {
      throw InvalidArgument("mined vertex " + std::to_string(v) + " is not in the topology");
    }
  }
  std::set<std::pair<DeviceId, DeviceId>> traversed;
  for (const auto& ep : episodes) {
    for (const auto& hop : ep.propagation) traversed.insert(hop);
  }
  std::size_t hits = 0;
  for (const auto& e : mined.edges()) hits += traversed.contains({e.from, e.to});
  RecoveryScore s;
  s.precision = mined.edges().empty()
                    ? 1.0
                    : static_cast<double>(hits) / static_cast<double>(mined.edges().size());
  s.recall = traversed.empty() ? 1.0
                               : static_cast<double>(hits) / static_cast<double>(traversed.size());
  return s;
}

std::string dag_to_json(const AssociationDag& dag) {
  json edges = json::array();
  for (const auto& e : dag.edges()) {
    edges.push_back({{"from", e.from}, {"to", e.to}, {"confidence", e.confidence}});
  }
  json doc;
  doc["vertices"] = dag.vertices();
  doc["edges"] = std::move(edges);
  return doc.dump(2) + "\n";
}

AssociationDag dag_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    DirectedGraph g;
    g.vertices = doc.at("vertices").get<std::vector<DeviceId>>();
    for (const auto& e : doc.at("edges")) {
      g.edges.push_back({e.at("from").get<DeviceId>(), e.at("to").get<DeviceId>(),
                         e.at("confidence").get<double>()});
    }
    return AssociationDag(std::move(g));
  } catch (const json::exception& e) {
    throw FormatError(std::string("DAG file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("DAG file: ") + e.what());
  }
}

}  // namespace telops
