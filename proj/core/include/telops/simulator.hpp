#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "telops/common.hpp"
#include "telops/ingestion.hpp"
#include "telops/topology.hpp"

namespace telops {

enum class Rarity { Common, Rare };

struct RootCause {
  CauseId id = 0;
  std::string name;
  std::set<DeviceKind> applicable_kinds;
  Rarity rarity = Rarity::Common;
  // Overrides the catalog-wide hop probability; 0 keeps the fault local.
  std::optional<double> hop_prob;

  friend bool operator==(const RootCause&, const RootCause&) = default;
};

struct DelayDist {
  double mean_seconds = 4.0;
  double jitter_seconds = 2.0;

  friend bool operator==(const DelayDist&, const DelayDist&) = default;
};

// What each root cause looks like on the wire: per (cause, device kind) the
// alarm names an affected device raises, plus the background alarm pool.
struct FaultCatalog {
  std::vector<RootCause> causes;
  std::map<std::pair<CauseId, DeviceKind>, std::vector<std::string>> alarm_templates;
  double hop_prob = 0.6;
  DelayDist delay;
  std::vector<std::string> noise_alarms;

  const RootCause& cause(CauseId id) const;
  std::size_t size() const { return causes.size(); }
  // Templates for (cause, kind); empty when the kind raises nothing.
  const std::vector<std::string>& templates(CauseId cause, DeviceKind kind) const;
  // Upper bound on the propagation delay of a single hop, in whole seconds.
  Timestamp max_hop_delay() const;

  friend bool operator==(const FaultCatalog&, const FaultCatalog&) = default;
};

// Throws InvalidArgument listing the first broken catalog invariant.
void check_catalog(const FaultCatalog& catalog);

// Eight causes (two rare), including "fan error" and "timestamp verification failed".
FaultCatalog default_catalog();

std::string catalog_to_json(const FaultCatalog& catalog);
FaultCatalog catalog_from_json(std::string_view text);

struct FailureEpisode {
  DeviceId root_device = 0;
  CauseId cause = 0;
  Timestamp root_time = 0;
  std::vector<AlarmRecord> records;
  // Topology links crossed by the fault, oriented parent -> child.
  std::vector<std::pair<DeviceId, DeviceId>> propagation;
};

// Breadth-first fault propagation from `root`. Record ids are assigned
// sequentially from `first_record_id`; the root's first record gets that id.
FailureEpisode inject_failure(const TopologyGraph& g, const FaultCatalog& catalog, CauseId cause,
                              DeviceId root, Timestamp t0, std::uint64_t seed,
                              RecordId first_record_id = 0);

struct ScenarioSpec {
  Scenario name = Scenario::AllDay;
  int start_hour = 0;
  int end_hour = 24;
  int n_episodes = 0;
  std::vector<double> cause_mix;  // indexed by cause position in the catalog
  double noise_rate = 0.5;        // background alarms per minute, network-wide
  // Mean alarms per background event; 1 gives plain Poisson single alarms.
  double noise_burst_mean = 1.0;
  int days = 7;
  Timestamp window_seconds = kDefaultWindowSeconds;
  std::uint64_t seed = 0;
};

// Mix giving `rare_mass` in total to rare causes, split evenly within each
// rarity class.
std::vector<double> rarity_mix(const FaultCatalog& catalog, double rare_mass);

// Spec for a named scenario: hour range from the name, mix from rare_mass.
ScenarioSpec make_scenario(Scenario name, const FaultCatalog& catalog, int n_episodes,
                           double rare_mass, double noise_rate, std::uint64_t seed);

void check_scenario(const ScenarioSpec& spec, const FaultCatalog& catalog);

struct ScenarioData {
  AlarmLog log;
  std::vector<EpisodeLabel> labels;
  std::vector<FailureEpisode> episodes;  // parallel to labels, record ids as in log
};

ScenarioData generate_scenario(const TopologyGraph& g, const FaultCatalog& catalog,
                               const ScenarioSpec& spec);

// Concatenates scenario outputs over disjoint time ranges and renumbers
// record ids in (timestamp, part, old id) order.
ScenarioData merge_scenarios(const std::vector<ScenarioData>& parts);

}  // namespace telops
