#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "telops/common.hpp"
#include "telops/ingestion.hpp"
#include "telops/simulator.hpp"
#include "telops/topology.hpp"

namespace telops {

// Per-device and per-pair sample membership counts. Pairs are keyed with
// the smaller id first.
struct CooccurrenceStats {
  std::size_t n_samples = 0;
  std::map<DeviceId, std::size_t> device_count;
  std::map<std::pair<DeviceId, DeviceId>, std::size_t> pair_count;
  // first_time[s][d]: earliest alarm of device d in sample s.
  std::vector<std::map<DeviceId, Timestamp>> first_time;

  std::size_t pair(DeviceId u, DeviceId v) const;
};

struct DagEdge {
  DeviceId from = 0;
  DeviceId to = 0;
  double confidence = 1.0;

  friend bool operator==(const DagEdge&, const DagEdge&) = default;
};

// Weighted directed graph; may contain cycles.
struct DirectedGraph {
  std::vector<DeviceId> vertices;
  std::vector<DagEdge> edges;

  friend bool operator==(const DirectedGraph&, const DirectedGraph&) = default;
};

// Vertex ids in a topological order, or nullopt when the graph has a cycle.
std::optional<std::vector<DeviceId>> topological_order(const DirectedGraph& g);

// Device association graph. Always acyclic with confidences in (0, 1];
// vertices ascending and edges sorted by (from, to).
class AssociationDag {
 public:
  AssociationDag() = default;
  // Throws InvalidArgument if any invariant fails.
  explicit AssociationDag(DirectedGraph g);

  const std::vector<DeviceId>& vertices() const { return graph_.vertices; }
  const std::vector<DagEdge>& edges() const { return graph_.edges; }
  const DirectedGraph& graph() const { return graph_; }
  std::uint64_t hash() const;

  friend bool operator==(const AssociationDag& x, const AssociationDag& y) {
    return x.graph_ == y.graph_;
  }

 private:
  DirectedGraph graph_;
};

std::uint64_t graph_hash(const DirectedGraph& g);

CooccurrenceStats mine_cooccurrence(const std::vector<DiagnosisSample>& samples);

// Thresholded, temporally oriented pair edges before cycle breaking. Raising
// either threshold only ever removes edges from this set.
DirectedGraph candidate_edges(const CooccurrenceStats& stats, double min_support,
                              double min_confidence);

// break_cycles(candidate_edges(...)).
AssociationDag build_dag(const CooccurrenceStats& stats, double min_support, double min_confidence);

// Repeatedly drops the lowest-confidence edge lying on a cycle (ties: smallest
// (from, to)) until the graph is acyclic.
AssociationDag break_cycles(const DirectedGraph& g);

struct RecoveryScore {
  double precision = 1.0;
  double recall = 1.0;
};

// Mined edges scored against the links the simulator's faults actually
// crossed, in propagation direction. Empty mined set has precision 1.
RecoveryScore dag_recovery_score(const AssociationDag& mined, const TopologyGraph& truth,
                                 const std::vector<FailureEpisode>& episodes);

std::string dag_to_json(const AssociationDag& dag);
AssociationDag dag_from_json(std::string_view text);

}  // namespace telops
