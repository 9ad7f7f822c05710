#include <algorithm>
#include <set>

#include "doctest.h"
#include "support/oracles.hpp"
#include "telops/simulator.hpp"

using namespace telops;

namespace {

std::set<DeviceId> alarmed(const FailureEpisode& ep) {
  std::set<DeviceId> out;
  for (const auto& r : ep.records) out.insert(*r.device_id);
  return out;
}

TopologyGraph star(int leaves) {
  std::vector<Device> devices{{0, DeviceKind::AggSwitch, 0}};
  std::vector<Link> links;
  for (int i = 1; i <= leaves; ++i) {
    devices.push_back({i, DeviceKind::BaseStation, 0});
    links.push_back({0, i});
  }
  return TopologyGraph(devices, links);
}

std::set<DeviceId> component_of(const TopologyGraph& g, DeviceId root) {
  std::set<DeviceId> seen{root};
  std::vector<DeviceId> stack{root};
  while (!stack.empty()) {
    const DeviceId u = stack.back();
    stack.pop_back();
    for (DeviceId v : g.neighbors(u)) {
      if (seen.insert(v).second) stack.push_back(v);
    }
  }
  return seen;
}

}  // namespace

TEST_CASE("default catalog contents") {
  const auto c = default_catalog();
  CHECK_NOTHROW(check_catalog(c));
  CHECK(c.size() == 8);
  CHECK(std::count_if(c.causes.begin(), c.causes.end(),
                      [](const RootCause& rc) { return rc.rarity == Rarity::Rare; }) == 2);
  CHECK(std::any_of(c.causes.begin(), c.causes.end(),
                    [](const RootCause& rc) { return rc.name == "fan error"; }));
  CHECK(std::any_of(c.causes.begin(), c.causes.end(),
                    [](const RootCause& rc) { return rc.name == "timestamp verification failed"; }));
  for (const auto& rc : c.causes) {
    if (rc.rarity != Rarity::Rare) continue;
    for (DeviceKind k : rc.applicable_kinds) CHECK(c.templates(rc.id, k).size() >= 2);
  }
}

TEST_CASE("catalog json round trip keeps per-cause hop overrides") {
  auto c = default_catalog();
  c.causes[0].hop_prob = 0.25;
  const auto back = catalog_from_json(catalog_to_json(c));
  CHECK(back == c);
  CHECK(back.causes[0].hop_prob == 0.25);
  CHECK(back.causes[6].hop_prob == 0.0);
  CHECK(!back.causes[1].hop_prob.has_value());
}

TEST_CASE("catalog invariants are enforced") {
  auto c = default_catalog();
  c.causes[2].hop_prob = 1.5;
  CHECK_THROWS_AS(check_catalog(c), InvalidArgument);
  c = default_catalog();
  c.causes[1].id = 5;
  CHECK_THROWS_AS(check_catalog(c), InvalidArgument);
  c = default_catalog();
  c.hop_prob = 0.0;
  CHECK_THROWS_AS(check_catalog(c), InvalidArgument);
  c = default_catalog();
  c.alarm_templates.erase({0, DeviceKind::Server});
  CHECK_THROWS_AS(check_catalog(c), InvalidArgument);
  CHECK_THROWS_AS(catalog_from_json("{}"), FormatError);
}

TEST_CASE("zero hop probability keeps the fault on the root") {
  auto c = oracle::separable_catalog(1, 0, 1.0);
  c.causes[0].hop_prob = 0.0;
  const auto g = generate_man_topology({2, 3, 9, 0.3, 4});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DeviceId root = g.devices()[seed % g.size()].id;
    const auto ep = inject_failure(g, c, 0, root, 1000, seed);
    CHECK(alarmed(ep) == std::set<DeviceId>{root});
    CHECK(ep.propagation.empty());
  }
}

TEST_CASE("certain propagation along a path") {
  const TopologyGraph g({{1, DeviceKind::CoreRouter, 0}, {2, DeviceKind::AggSwitch, 0},
                         {3, DeviceKind::BaseStation, 0}},
                        {{1, 2}, {2, 3}});
  const auto c = oracle::separable_catalog(1, 0, 1.0);
  const auto ep = inject_failure(g, c, 0, 1, 500, 3, 10);
  REQUIRE(ep.records.size() == 3);
  CHECK(ep.records[0].record_id == 10);
  CHECK(ep.records[0].device_id == 1);
  CHECK(ep.records[1].device_id == 2);
  CHECK(ep.records[2].device_id == 3);
  CHECK(*ep.records[0].timestamp == 500);
  CHECK(*ep.records[0].timestamp < *ep.records[1].timestamp);
  CHECK(*ep.records[1].timestamp < *ep.records[2].timestamp);
  CHECK(ep.records[0].severity == Severity::Critical);
  CHECK(ep.records[1].severity == Severity::Major);
  CHECK(ep.records[2].severity == Severity::Minor);
  CHECK(ep.propagation == std::vector<std::pair<DeviceId, DeviceId>>{{1, 2}, {2, 3}});
}

TEST_CASE("star leaves are reached with the hop probability") {
  const auto g = star(8);
  const auto c = oracle::separable_catalog(1, 0, 0.5);
  double reached = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    reached += static_cast<double>(alarmed(inject_failure(g, c, 0, 0, 0, derive_seed(99, s))).size() - 1);
  }
  CHECK(std::abs(reached / (8.0 * seeds) - 0.5) <= 0.02);
}

TEST_CASE("inject_failure rejects inapplicable roots") {
  const auto c = default_catalog();
  const auto g = generate_man_topology({1, 1, 1, 0.0, 1});
  DeviceId bs = 0;
  for (const auto& d : g.devices()) {
    if (d.kind == DeviceKind::BaseStation) bs = d.id;
  }
  CHECK_THROWS_AS(inject_failure(g, c, 7, bs, 0, 1), InvalidArgument);  // routing loop
  CHECK_THROWS_AS(inject_failure(g, c, 42, bs, 0, 1), InvalidArgument);
}

TEST_CASE("episodes: root first, reach within component, windows disjoint") {
  const auto c = default_catalog();
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = generate_man_topology({2, 4, 12, 0.3, rng.next_u64()});
    auto spec = make_scenario(Scenario::AllDay, c, 40, 0.3, 0.5, rng.next_u64());
    spec.days = 2;
    const auto data = generate_scenario(g, c, spec);
    REQUIRE(data.labels.size() == 40);
    REQUIRE(data.episodes.size() == 40);
    for (std::size_t e = 0; e < data.episodes.size(); ++e) {
      const auto& ep = data.episodes[e];
      REQUIRE(!ep.records.empty());
      const auto first = std::min_element(ep.records.begin(), ep.records.end(),
                                          [](const AlarmRecord& x, const AlarmRecord& y) {
                                            return x.record_id < y.record_id;
                                          });
      CHECK(first->device_id == ep.root_device);
      CHECK(first->record_id == data.labels[e].root_record);
      CHECK(data.labels[e].cause == ep.cause);
      const auto comp = component_of(g, ep.root_device);
      for (DeviceId d : alarmed(ep)) CHECK(comp.contains(d));
      for (const auto& r : ep.records) CHECK(*r.timestamp >= ep.root_time);
    }
    for (std::size_t e = 1; e < data.episodes.size(); ++e) {
      CHECK(data.episodes[e].root_time - data.episodes[e - 1].root_time >
            2 * spec.window_seconds + c.max_hop_delay() * static_cast<Timestamp>(g.size()));
    }
  }
}

TEST_CASE("no episodes leaves only noise") {
  const auto c = default_catalog();
  const auto g = generate_man_topology({});
  const auto spec = make_scenario(Scenario::OffPeak, c, 0, 0.1, 2.0, 5);
  const auto data = generate_scenario(g, c, spec);
  CHECK(data.labels.empty());
  CHECK(!data.log.empty());
  for (const auto& r : data.log.records()) {
    CHECK(r.severity == Severity::Warning);
    CHECK(std::find(c.noise_alarms.begin(), c.noise_alarms.end(), r.alarm_name) != c.noise_alarms.end());
    CHECK(hour_of_day(*r.timestamp) < 18);
  }
}

TEST_CASE("peak roots fall in the evening and generation is deterministic") {
  const auto c = default_catalog();
  const auto g = generate_man_topology({});
  const auto spec = make_scenario(Scenario::Peak, c, 60, 0.5, 0.5, 17);
  const auto a = generate_scenario(g, c, spec);
  for (const auto& ep : a.episodes) {
    CHECK(hour_of_day(ep.root_time) >= 18);
    CHECK(hour_of_day(ep.root_time) < 24);
  }
  const auto b = generate_scenario(g, c, spec);
  CHECK(a.log == b.log);
  CHECK(a.labels == b.labels);
}

TEST_CASE("scenario mixes and spacing are checked") {
  const auto c = default_catalog();
  const auto mix = rarity_mix(c, 0.5);
  CHECK(mix[6] == doctest::Approx(0.25));
  CHECK(mix[0] == doctest::Approx(0.5 / 6));
  CHECK_THROWS_AS(check_scenario(make_scenario(Scenario::OffPeak, c, 10, 0.2, 0.5, 1), c),
                  InvalidArgument);
  CHECK_THROWS_AS(check_scenario(make_scenario(Scenario::Peak, c, 10, 0.3, 0.5, 1), c),
                  InvalidArgument);
  auto spec = make_scenario(Scenario::Peak, c, 10000, 0.5, 0.5, 1);
  spec.days = 1;
  CHECK_THROWS_AS(generate_scenario(generate_man_topology({}), c, spec), InvalidArgument);
}

TEST_CASE("merge renumbers records and keeps labels aligned") {
  const auto c = default_catalog();
  const auto g = generate_man_topology({});
  auto off = make_scenario(Scenario::OffPeak, c, 20, 0.1, 0.5, 1);
  auto peak = make_scenario(Scenario::Peak, c, 10, 0.5, 0.5, 2);
  off.days = peak.days = 2;
  const auto a = generate_scenario(g, c, off);
  const auto b = generate_scenario(g, c, peak);
  const auto m = merge_scenarios({a, b});
  CHECK(m.log.size() == a.log.size() + b.log.size());
  REQUIRE(m.labels.size() == 30);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    const AlarmRecord* root = m.log.find(m.labels[i].root_record);
    REQUIRE(root != nullptr);
    CHECK(root->device_id == m.episodes[i].root_device);
    CHECK(*root->timestamp == m.episodes[i].root_time);
    if (i) CHECK(m.labels[i - 1].root_record < m.labels[i].root_record);
  }
  for (std::size_t i = 0; i < m.log.size(); ++i) CHECK(m.log.records()[i].record_id == static_cast<RecordId>(i));
}
