#pragma once

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "telops/association.hpp"
#include "telops/common.hpp"
#include "telops/embedding.hpp"
#include "telops/matrix.hpp"

namespace telops {

struct GnnHyperparams {
  std::size_t layers = 2;
  std::size_t hidden = 16;
  std::size_t heads = 2;
  double leaky_slope = 0.2;
  double lr = 0.01;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  std::size_t classes = 2;
};

void check_hyperparams(const GnnHyperparams& hp);

// Vertices (ascending ids) plus directed edges. Messages flow along edge
// direction; every vertex also attends to itself.
class MessageGraph {
 public:
  MessageGraph() = default;
  MessageGraph(std::vector<DeviceId> vertices, std::vector<std::pair<DeviceId, DeviceId>> edges);

  static MessageGraph from_dag(const AssociationDag& dag);
  // Every ordered pair of distinct vertices.
  static MessageGraph complete(std::vector<DeviceId> vertices);

  const std::vector<DeviceId>& vertices() const { return vertices_; }
  const std::vector<std::pair<DeviceId, DeviceId>>& edges() const { return edges_; }
  std::size_t size() const { return vertices_.size(); }
  // Indices of u with u -> v, plus v itself, ascending.
  const std::vector<std::size_t>& neighborhood(std::size_t v) const { return neighborhood_[v]; }
  std::uint64_t hash() const;

  friend bool operator==(const MessageGraph& x, const MessageGraph& y) {
    return x.vertices_ == y.vertices_ && x.edges_ == y.edges_;
  }

 private:
  std::vector<DeviceId> vertices_;
  std::vector<std::pair<DeviceId, DeviceId>> edges_;
  std::vector<std::vector<std::size_t>> neighborhood_;
};

// Offsets of each parameter block inside GnnModel::params.
struct GnnLayout {
  struct Head {
    std::size_t weight;     // in_dim x hidden
    std::size_t attention;  // 2 * hidden: source half, then target half
  };
  std::vector<std::size_t> in_dims;     // per layer
  std::vector<std::vector<Head>> heads;  // [layer][head]
  std::size_t readout_weight = 0;        // hidden x classes
  std::size_t readout_bias = 0;          // classes
  std::size_t total = 0;

  static GnnLayout make(std::size_t in_dim, const GnnHyperparams& hp);
};

struct GnnModel {
  GnnHyperparams hp;
  std::size_t in_dim = 0;
  MessageGraph graph;
  std::vector<double> params;
  std::uint64_t vocab_hash = 0;

  GnnLayout layout() const { return GnnLayout::make(in_dim, hp); }
};

struct Diagnosis {
  CauseId cause = 0;
  std::vector<double> distribution;
};

// One training or evaluation example; rows follow the model's vertex order.
struct GraphSample {
  Matrix features;
  CauseId label = 0;
};

// Rows in graph vertex order; throws on missing vertices or width mismatch.
Matrix feature_matrix(const MessageGraph& graph, const VertexFeatures& features,
                      std::size_t expected_dim);

// Glorot-uniform weights, zero readout bias.
GnnModel init_gnn(const MessageGraph& graph, std::size_t in_dim, const GnnHyperparams& hp);

Diagnosis forward(const GnnModel& model, const Matrix& features);
Diagnosis forward(const GnnModel& model, const VertexFeatures& features);

struct AttentionTrace {
  // alpha[layer][head][v] lists (u, alpha_uv) over the neighbourhood of v.
  std::vector<std::vector<std::vector<std::vector<std::pair<std::size_t, double>>>>> alpha;
  Matrix vertex_repr;  // final-layer vertex representations, before readout
  std::vector<double> logits;
  std::vector<double> distribution;
};

AttentionTrace trace_forward(const GnnModel& model, const Matrix& features);

double loss(const GnnModel& model, std::span<const GraphSample> batch);
std::vector<double> gradients(const GnnModel& model, std::span<const GraphSample> batch);

struct TrainingLog {
  std::vector<double> loss_history;  // loss before each epoch's update, then the final loss
  std::vector<std::string> warnings;
};

// Full-batch Adam. Returns the lowest-loss parameters visited, so the final
// training loss never exceeds the initial one.
GnnModel train(const MessageGraph& graph, std::span<const GraphSample> samples,
               const GnnHyperparams& hp, TrainingLog* log = nullptr);

GnnModel train(const AssociationDag& dag, std::span<const GraphSample> samples,
               const GnnHyperparams& hp, TrainingLog* log = nullptr);

Diagnosis diagnose(const GnnModel& model, const DiagnosisSample& sample,
                   const EmbeddingMatrix& emb, const Vocabulary& vocab,
                   const FeatureCaps& caps = {});

std::size_t argmax(std::span<const double> values);  // ties -> lowest index
std::vector<double> softmax(std::span<const double> logits);

enum class ModelKind : std::uint64_t { AttentionGnn = 1, FcGnn = 2, Mlp = 3, Forest = 4 };

// Checkpoint: "TLOPSMDL", kind, L, h, H, C, in_dim, slope, graph hash,
// vocab hash, parameter count, parameters (little-endian).
void save_gnn(std::ostream& os, const GnnModel& model, ModelKind kind = ModelKind::AttentionGnn);
GnnModel load_gnn(std::istream& is, const MessageGraph& graph, std::uint64_t vocab_hash,
                  ModelKind kind = ModelKind::AttentionGnn);

// Shared Adam update used by every gradient-trained model.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, std::span<const double> grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace telops
