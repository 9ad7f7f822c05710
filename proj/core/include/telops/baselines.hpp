#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "telops/common.hpp"
#include "telops/gnn.hpp"
#include "telops/ingestion.hpp"
#include "telops/simulator.hpp"

namespace telops {

// The attention GNN run over the complete directed graph on a vertex set.
struct FcGnnModel {
  GnnModel inner;
};

FcGnnModel train_fc_gnn(std::vector<DeviceId> vertices, std::span<const GraphSample> samples,
                        const GnnHyperparams& hp, TrainingLog* log = nullptr);
Diagnosis forward(const FcGnnModel& model, const Matrix& features);

void save_fc_gnn(std::ostream& os, const FcGnnModel& model);
FcGnnModel load_fc_gnn(std::istream& is, std::vector<DeviceId> vertices, std::uint64_t vocab_hash);

// ---- MLP over pooled sample features ----

struct MlpHyperparams {
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 16;
  double lr = 0.01;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  std::size_t classes = 2;
};

void check_hyperparams(const MlpHyperparams& hp);

struct MlpLayout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, total = 0;

  static MlpLayout make(std::size_t in_dim, const MlpHyperparams& hp);
};

struct MlpModel {
  MlpHyperparams hp;
  std::size_t in_dim = 0;
  std::vector<double> params;
  std::uint64_t vocab_hash = 0;

  MlpLayout layout() const { return MlpLayout::make(in_dim, hp); }
};

struct MlpSample {
  std::vector<double> input;
  CauseId label = 0;
};

inline constexpr std::size_t kGlobalFeatures = 4;

// Whole-window counts: records, max severity, distinct alarm names, alarmed
// devices, each scaled to [0, 1].
std::vector<double> global_features(const DiagnosisSample& sample);

// Column mean of the vertex feature matrix followed by global_features().
std::vector<double> pooled_features(const Matrix& vertex_features, const DiagnosisSample& sample);

MlpModel init_mlp(std::size_t in_dim, const MlpHyperparams& hp);
Diagnosis forward(const MlpModel& model, std::span<const double> input);
double loss(const MlpModel& model, std::span<const MlpSample> batch);
std::vector<double> gradients(const MlpModel& model, std::span<const MlpSample> batch);
MlpModel train_mlp(std::span<const MlpSample> samples, const MlpHyperparams& hp,
                   TrainingLog* log = nullptr);

void save_mlp(std::ostream& os, const MlpModel& model);
MlpModel load_mlp(std::istream& is, std::uint64_t vocab_hash);

// ---- Random forest over explicit alarm-name counts ----

struct ForestParams {
  std::size_t trees = 50;
  std::size_t max_depth = 8;
  std::size_t features_per_split = 0;  // 0: round(sqrt(feature count))
  std::size_t min_samples_split = 2;
  bool bootstrap = true;  // false: every tree sees the full training set
  std::uint64_t seed = 1;
  std::size_t classes = 2;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct ForestSample {
  std::vector<double> input;
  CauseId label = 0;
};

// Per cause, the number of records whose alarm name is one of that cause's
// templates, then the raw record count, max severity rank, distinct names
// and alarmed devices.
std::vector<double> forest_features(const DiagnosisSample& sample, const FaultCatalog& catalog);

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;  // left: x <= threshold
  double score = 0.0;      // sum_c nL_c^2 / nL + sum_c nR_c^2 / nR, larger is purer
};

// Best axis-aligned split of rows[idx] over the listed features, thresholds
// at midpoints between consecutive distinct values. Ties go to the lowest
// feature, then the lowest threshold. nullopt when no split separates rows.
std::optional<Split> best_split(std::span<const ForestSample> rows, std::span<const std::size_t> idx,
                                std::span<const std::size_t> features, std::size_t classes);

struct TreeNode {
  static constexpr std::size_t kLeaf = static_cast<std::size_t>(-1);
  std::size_t feature = kLeaf;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::vector<double> distribution;  // class frequencies of the training rows reaching the node

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const std::vector<double>& leaf(std::span<const double> x) const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestModel {
  ForestParams params;
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

ForestModel train_forest(std::span<const ForestSample> samples, const ForestParams& params);
// Each tree votes for its leaf's most frequent class; the distribution is
// the vote share and the cause is the most-voted class (ties -> lowest id).
Diagnosis forward(const ForestModel& model, std::span<const double> input);

void save_forest(std::ostream& os, const ForestModel& model);
ForestModel load_forest(std::istream& is);

}  // namespace telops
