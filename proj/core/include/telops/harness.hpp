#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "telops/association.hpp"
#include "telops/baselines.hpp"
#include "telops/common.hpp"
#include "telops/embedding.hpp"
#include "telops/gnn.hpp"
#include "telops/ingestion.hpp"
#include "telops/simulator.hpp"
#include "telops/topology.hpp"

namespace telops {

inline constexpr std::string_view kMethodTelOps = "telops-gnn";
inline constexpr std::string_view kMethodFcGnn = "fc-gnn";
inline constexpr std::string_view kMethodMlp = "mlp";
inline constexpr std::string_view kMethodForest = "random-forest";

// Report order.
const std::vector<std::string>& method_names();
const std::vector<Scenario>& report_scenarios();  // AllDay, OffPeak, Peak

// Raised by run_experiment and the CLI; stage() names the failing step.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& detail)
      : std::runtime_error("error in stage " + stage + ": " + detail), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  TopologySpec topology;
  std::optional<std::string> catalog_path;  // default catalog when unset
  int offpeak_episodes = 450;
  int peak_episodes = 150;
  double offpeak_rare_mass = 0.1;
  double peak_rare_mass = 0.5;
  double noise_rate = 0.5;
  double noise_burst_mean = 1.0;
  int days = 14;
  Timestamp window_seconds = kDefaultWindowSeconds;
  double train_fraction = 0.8;
  double min_support = 0.01;
  double min_confidence = 0.3;
  // Alarms below this severity are left out of DAG mining.
  Severity mining_min_severity = Severity::Minor;
  std::size_t vocab_min_count = 1;
  SkipGramParams skipgram;
  FeatureCaps caps;
  GnnHyperparams gnn;
  GnnHyperparams fc_gnn;
  MlpHyperparams mlp;
  ForestParams forest;
  std::uint64_t seed = 1;
};

// Throws InvalidArgument naming the first bad field. `classes` is the catalog size.
void check_config(const ExperimentConfig& cfg, std::size_t classes);

// Every field is optional in the JSON; unknown keys are rejected.
ExperimentConfig config_from_json(std::string_view text);
std::string config_to_json(const ExperimentConfig& cfg);

FaultCatalog load_catalog(const ExperimentConfig& cfg);

struct GeneratedData {
  TopologyGraph topology;
  FaultCatalog catalog;
  ScenarioData data;  // OffPeak and Peak merged
};

// Topology plus both scenarios, every stream derived from cfg.seed.
GeneratedData generate_data(const ExperimentConfig& cfg);

struct EpisodeSplit {
  std::vector<EpisodeLabel> train;
  std::vector<EpisodeLabel> test;
};

// Episodes shuffled and cut per (scenario, cause) cell so both sides keep the
// mix; throws "empty scenario cell" when OffPeak or Peak has no test episode.
EpisodeSplit split_episodes(const AlarmLog& log, const std::vector<EpisodeLabel>& labels,
                            double train_fraction, std::uint64_t seed);

std::vector<DiagnosisSample> extract_samples(const AlarmLog& log,
                                             const std::vector<EpisodeLabel>& labels,
                                             Timestamp window_seconds);

// Everything learned from the training split.
struct TrainedPipeline {
  AssociationDag dag;  // mined edges over every topology device
  MessageGraph graph;
  Vocabulary vocab;
  EmbeddingMatrix embedding;
  GnnModel telops;
  FcGnnModel fc_gnn;
  MlpModel mlp;
  ForestModel forest;
  std::map<std::string, double> train_seconds;
  std::map<std::string, std::vector<std::string>> warnings;

  // Checkpoint bytes keyed by file name.
  std::map<std::string, std::string> checkpoints() const;
};

TrainedPipeline train_pipeline(const std::vector<DiagnosisSample>& train,
                               const TopologyGraph& topology, const FaultCatalog& catalog,
                               const ExperimentConfig& cfg);

// Per-method prediction for one labelled sample.
std::map<std::string, Diagnosis> predict_all(const TrainedPipeline& p, const DiagnosisSample& sample,
                                             const FaultCatalog& catalog, const FeatureCaps& caps);

struct CellCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  friend bool operator==(const CellCount&, const CellCount&) = default;
};

struct ResultTable {
  std::map<std::pair<std::string, Scenario>, double> accuracy;
  std::map<std::pair<std::string, Scenario>, CellCount> counts;
  // Supplementary: per (method, cause) recall counts over AllDay.
  std::map<std::pair<std::string, CauseId>, CellCount> per_class;
  // Wall-clock seconds per method; excluded from ==, CSV and text reports.
  std::map<std::string, double> train_seconds;

  bool complete() const;
  double at(std::string_view method, Scenario s) const;

  friend bool operator==(const ResultTable& x, const ResultTable& y) {
    return x.accuracy == y.accuracy && x.counts == y.counts && x.per_class == y.per_class;
  }
};

ResultTable evaluate(const TrainedPipeline& p, const std::vector<DiagnosisSample>& test,
                     const FaultCatalog& catalog, const FeatureCaps& caps);

struct ExperimentRun {
  GeneratedData generated;
  EpisodeSplit split;
  TrainedPipeline pipeline;
  ResultTable results;
};

// generate -> ingest -> split -> mine DAG, embed and train on the training
// split -> evaluate on held-out episodes. Failures surface as StageError.
ExperimentRun run_experiment_full(const ExperimentConfig& cfg);
ResultTable run_experiment(const ExperimentConfig& cfg);

// "92.8%"
std::string format_percent(double fraction);

// One row per method x scenario: method,scenario,accuracy,correct,total.
// Throws InvalidArgument("incomplete table") when a cell is missing.
std::string report_csv(const ResultTable& t);
ResultTable parse_results_csv(std::string_view text);
// Accuracy table grouped by scenario.
std::string report_text(const ResultTable& t);
std::string recall_csv(const ResultTable& t);
std::string timings_csv(const ResultTable& t);

// Mean accuracy per cell over several runs.
std::map<std::pair<std::string, Scenario>, double> mean_accuracy(
    const std::vector<ResultTable>& runs);

}  // namespace telops
