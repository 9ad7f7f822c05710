#include "telops/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include "json.hpp"

namespace telops {

using nlohmann::json;

namespace {

std::string_view to_string(Rarity r) { return r == Rarity::Rare ? "Rare" : "Common"; }

Rarity parse_rarity(std::string_view text) {
  if (text == "Common") return Rarity::Common;
  if (text == "Rare") return Rarity::Rare;
  throw FormatError("unknown rarity '" + std::string(text) + "'");
}

std::vector<std::string> device_extras(const Device& d) {
  std::vector<std::string> extras(kDefaultExtraColumns);
  extras[0] = "vendor-" + std::to_string(d.vendor);
  extras[1] = std::string(to_string(d.kind));
  extras[2] = "ne-" + std::to_string(d.id);
  return extras;
}

Timestamp sample_delay(const DelayDist& delay, Rng& rng) {
  const double raw = delay.mean_seconds + delay.jitter_seconds * rng.uniform(-1.0, 1.0);
  return std::max<Timestamp>(1, static_cast<Timestamp>(std::llround(raw)));
}

Severity severity_for_depth(int depth) {
  if (depth == 0) return Severity::Critical;
  if (depth == 1) return Severity::Major;
  return Severity::Minor;
}

const std::vector<std::string> kNoTemplates;

}  // namespace

const RootCause& FaultCatalog::cause(CauseId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= causes.size()) {
    throw InvalidArgument("unknown cause id " + std::to_string(id));
  }
  return causes[static_cast<std::size_t>(id)];
}

const std::vector<std::string>& FaultCatalog::templates(CauseId cause, DeviceKind kind) const {
  auto it = alarm_templates.find({cause, kind});
  return it == alarm_templates.end() ? kNoTemplates : it->second;
}

Timestamp FaultCatalog::max_hop_delay() const {
  return std::max<Timestamp>(
      1, static_cast<Timestamp>(std::ceil(delay.mean_seconds + delay.jitter_seconds)) + 1);
}

void check_catalog(const FaultCatalog& catalog) {
  if (catalog.causes.empty()) throw InvalidArgument("catalog has no causes");
  std::set<std::string> names;
  for (std::size_t i = 0; i < catalog.causes.size(); ++i) {
    const auto& c = catalog.causes[i];
    if (c.id != static_cast<CauseId>(i)) {
      throw InvalidArgument("cause ids must be dense and ordered; got " + std::to_string(c.id) +
                            " at position " + std::to_string(i));
    }
    if (!names.insert(c.name).second) throw InvalidArgument("duplicate cause name '" + c.name + "'");
    if (c.applicable_kinds.empty()) {
      throw InvalidArgument("cause '" + c.name + "' has no applicable device kinds");
    }
    if (c.hop_prob && !(*c.hop_prob >= 0.0 && *c.hop_prob <= 1.0)) {
      throw InvalidArgument("cause '" + c.name + "' has hop_prob outside [0, 1]");
    }
    for (DeviceKind k : c.applicable_kinds) {
      if (catalog.templates(c.id, k).empty()) {
        throw InvalidArgument("cause '" + c.name + "' lacks templates for " +
                              std::string(to_string(k)));
      }
    }
  }
  for (const auto& [key, alarms] : catalog.alarm_templates) {
    if (key.first < 0 || static_cast<std::size_t>(key.first) >= catalog.causes.size()) {
      throw InvalidArgument("templates reference unknown cause " + std::to_string(key.first));
    }
    for (const auto& a : alarms) {
      if (a.empty()) throw InvalidArgument("empty alarm template");
    }
  }
  if (!(catalog.hop_prob > 0.0 && catalog.hop_prob <= 1.0)) {
    throw InvalidArgument("hop_prob must lie in (0, 1]");
  }
  if (!(catalog.delay.mean_seconds > 0.0) || !(catalog.delay.jitter_seconds >= 0.0)) {
    throw InvalidArgument("delay distribution must have positive mean and non-negative jitter");
  }
}

FaultCatalog default_catalog() {
  using K = DeviceKind;
  FaultCatalog c;
  auto add = [&](std::string name, std::set<K> kinds, Rarity rarity,
                 std::vector<std::pair<K, std::vector<std::string>>> templates) {
    const CauseId id = static_cast<CauseId>(c.causes.size());
    c.causes.push_back({id, std::move(name), std::move(kinds), rarity});
    for (auto& [kind, alarms] : templates) c.alarm_templates[{id, kind}] = std::move(alarms);
  };

  // Common causes raise a distinctive alarm at the faulty element.
  add("fan error", {K::Server, K::CoreRouter, K::AggSwitch}, Rarity::Common,
      {{K::Server, {"FAN_FAILURE"}},
       {K::CoreRouter, {"FAN_FAILURE"}},
       {K::AggSwitch, {"FAN_FAILURE"}},
       {K::BaseStation, {"BOARD_TEMPERATURE_HIGH"}}});
  add("timestamp verification failed", {K::BaseStation}, Rarity::Common,
      {{K::BaseStation, {"PTP_TIMESTAMP_CHECK_FAILED"}},
       {K::AggSwitch, {"PTP_PORT_STATE_CHANGED"}},
       {K::CoreRouter, {"PTP_PORT_STATE_CHANGED"}},
       {K::Server, {"PTP_PORT_STATE_CHANGED"}}});
  add("power supply failure", {K::AggSwitch, K::BaseStation}, Rarity::Common,
      {{K::AggSwitch, {"POWER_INPUT_LOST"}},
       {K::BaseStation, {"POWER_INPUT_LOST"}},
       {K::CoreRouter, {"NEIGHBOR_DOWN"}},
       {K::Server, {"NEIGHBOR_DOWN"}}});
  add("optical module fault", {K::CoreRouter, K::AggSwitch}, Rarity::Common,
      {{K::CoreRouter, {"OPTICAL_RX_POWER_LOW"}},
       {K::AggSwitch, {"OPTICAL_RX_POWER_LOW"}},
       {K::BaseStation, {"S1_LINK_DOWN"}},
       {K::Server, {"S1_LINK_DOWN"}}});
  add("board hardware fault", {K::CoreRouter, K::AggSwitch}, Rarity::Common,
      {{K::CoreRouter, {"BOARD_FAULT"}},
       {K::AggSwitch, {"BOARD_FAULT"}},
       {K::BaseStation, {"SERVICE_DEGRADED"}},
       {K::Server, {"SERVICE_DEGRADED"}}});
  add("cell out of service", {K::BaseStation}, Rarity::Common,
      {{K::BaseStation, {"CELL_UNAVAILABLE"}},
       {K::AggSwitch, {"SERVICE_DEGRADED"}},
       {K::CoreRouter, {"SERVICE_DEGRADED"}},
       {K::Server, {"SERVICE_DEGRADED"}}});
  // Rare causes stay on the faulty element and look identical on the wire:
  // the same routine symptoms that also fire as background noise. Only the
  // position of the faulty element in the network tells them apart.
  const std::vector<std::string> symptoms{"HANDOVER_FAILURE_RATE_HIGH", "PACKET_LOSS_HIGH"};
  add("LTE/NR switching failure", {K::BaseStation}, Rarity::Rare, {{K::BaseStation, symptoms}});
  add("routing loop", {K::AggSwitch}, Rarity::Rare, {{K::AggSwitch, symptoms}});
  c.causes[6].hop_prob = 0.0;
  c.causes[7].hop_prob = 0.0;

  c.hop_prob = 0.6;
  c.delay = {4.0, 2.0};
  c.noise_alarms = {"HANDOVER_FAILURE_RATE_HIGH", "X2_LINK_FLAP", "ROUTE_FLAP",
                    "PACKET_LOSS_HIGH"};
  return c;
}

std::string catalog_to_json(const FaultCatalog& catalog) {
  json causes = json::array();
  for (const auto& c : catalog.causes) {
    json kinds = json::array();
    for (DeviceKind k : c.applicable_kinds) kinds.push_back(std::string(to_string(k)));
    json entry = {{"id", c.id},
                  {"name", c.name},
                  {"applicable_kinds", std::move(kinds)},
                  {"rarity", std::string(to_string(c.rarity))}};
    if (c.hop_prob) entry["hop_prob"] = *c.hop_prob;
    causes.push_back(std::move(entry));
  }
  json templates = json::array();
  for (const auto& [key, alarms] : catalog.alarm_templates) {
    templates.push_back(
        {{"cause", key.first}, {"kind", std::string(to_string(key.second))}, {"alarms", alarms}});
  }
  json doc;
  doc["causes"] = std::move(causes);
  doc["alarm_templates"] = std::move(templates);
  doc["hop_prob"] = catalog.hop_prob;
  doc["delay_dist"] = {{"mean_seconds", catalog.delay.mean_seconds},
                       {"jitter_seconds", catalog.delay.jitter_seconds}};
  doc["noise_alarms"] = catalog.noise_alarms;
  return doc.dump(2) + "\n";
}

FaultCatalog catalog_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    FaultCatalog c;
    for (const auto& j : doc.at("causes")) {
      RootCause rc;
      rc.id = j.at("id").get<CauseId>();
      rc.name = j.at("name").get<std::string>();
      for (const auto& k : j.at("applicable_kinds")) {
        rc.applicable_kinds.insert(parse_device_kind(k.get<std::string>()));
      }
      rc.rarity = parse_rarity(j.at("rarity").get<std::string>());
      if (j.contains("hop_prob")) rc.hop_prob = j.at("hop_prob").get<double>();
      c.causes.push_back(std::move(rc));
    }
    for (const auto& j : doc.at("alarm_templates")) {
      c.alarm_templates[{j.at("cause").get<CauseId>(),
                         parse_device_kind(j.at("kind").get<std::string>())}] =
          j.at("alarms").get<std::vector<std::string>>();
    }
    c.hop_prob = doc.at("hop_prob").get<double>();
    c.delay.mean_seconds = doc.at("delay_dist").at("mean_seconds").get<double>();
    c.delay.jitter_seconds = doc.at("delay_dist").at("jitter_seconds").get<double>();
    c.noise_alarms = doc.value("noise_alarms", std::vector<std::string>{});
    check_catalog(c);
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("catalog file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("catalog file: ") + e.what());
  }
}

FailureEpisode inject_failure(const TopologyGraph& g, const FaultCatalog& catalog, CauseId cause,
                              DeviceId root, Timestamp t0, std::uint64_t seed,
                              RecordId first_record_id) {
  const RootCause& rc = catalog.cause(cause);
  const Device& root_dev = g.device(root);
  if (!rc.applicable_kinds.contains(root_dev.kind)) {
    throw InvalidArgument("cause '" + rc.name + "' does not apply to " +
                          std::string(to_string(root_dev.kind)));
  }
  const double hop_prob = rc.hop_prob.value_or(catalog.hop_prob);
  if (!(hop_prob >= 0.0 && hop_prob <= 1.0)) throw InvalidArgument("hop_prob must lie in [0, 1]");
  if (t0 < 0) throw InvalidArgument("root time must be non-negative");

  Rng rng(seed);
  FailureEpisode ep;
  ep.root_device = root;
  ep.cause = cause;
  ep.root_time = t0;

  struct Hit {
    DeviceId device;
    Timestamp time;
    int depth;
  };
  std::unordered_map<DeviceId, bool> affected{{root, true}};
  std::deque<Hit> queue{{root, t0, 0}};
  RecordId next_id = first_record_id;
  while (!queue.empty()) {
    const Hit hit = queue.front();
    queue.pop_front();
    const Device& dev = g.device(hit.device);
    for (const auto& name : catalog.templates(cause, dev.kind)) {
      AlarmRecord r;
      r.record_id = next_id++;
      r.timestamp = hit.time;
      r.device_id = hit.device;
      r.alarm_name = name;
      r.severity = severity_for_depth(hit.depth);
      r.extras = device_extras(dev);
      ep.records.push_back(std::move(r));
    }
    for (DeviceId n : g.neighbors(hit.device)) {
      if (affected.contains(n)) continue;
      if (!rng.bernoulli(hop_prob)) continue;
      affected.emplace(n, true);
      ep.propagation.emplace_back(hit.device, n);
      queue.push_back({n, hit.time + sample_delay(catalog.delay, rng), hit.depth + 1});
    }
  }
  return ep;
}

std::vector<double> rarity_mix(const FaultCatalog& catalog, double rare_mass) {
  if (!(rare_mass >= 0.0 && rare_mass <= 1.0)) throw InvalidArgument("rare_mass must lie in [0,1]");
  std::size_t n_rare = 0;
  for (const auto& c : catalog.causes) n_rare += c.rarity == Rarity::Rare;
  const std::size_t n_common = catalog.causes.size() - n_rare;
  if (n_rare == 0 && rare_mass > 0.0) throw InvalidArgument("catalog has no rare causes");
  if (n_common == 0 && rare_mass < 1.0) throw InvalidArgument("catalog has no common causes");
  std::vector<double> mix;
  for (const auto& c : catalog.causes) {
    mix.push_back(c.rarity == Rarity::Rare ? rare_mass / static_cast<double>(n_rare)
                                           : (1.0 - rare_mass) / static_cast<double>(n_common));
  }
  return mix;
}

ScenarioSpec make_scenario(Scenario name, const FaultCatalog& catalog, int n_episodes,
                           double rare_mass, double noise_rate, std::uint64_t seed) {
  ScenarioSpec s;
  s.name = name;
  switch (name) {
    case Scenario::AllDay: s.start_hour = 0; s.end_hour = 24; break;
    case Scenario::OffPeak: s.start_hour = 0; s.end_hour = 18; break;
    case Scenario::Peak: s.start_hour = 18; s.end_hour = 24; break;
  }
  s.n_episodes = n_episodes;
  s.cause_mix = rarity_mix(catalog, rare_mass);
  s.noise_rate = noise_rate;
  s.seed = seed;
  return s;
}

void check_scenario(const ScenarioSpec& spec, const FaultCatalog& catalog) {
  check_catalog(catalog);
  const std::pair<int, int> expected = spec.name == Scenario::OffPeak ? std::pair{0, 18}
                                       : spec.name == Scenario::Peak  ? std::pair{18, 24}
                                                                      : std::pair{0, 24};
  if (std::pair{spec.start_hour, spec.end_hour} != expected) {
    throw InvalidArgument(std::string(to_string(spec.name)) + " scenario must span hours [" +
                          std::to_string(expected.first) + "," + std::to_string(expected.second) +
                          ")");
  }
  if (spec.n_episodes < 0) throw InvalidArgument("n_episodes must be non-negative");
  if (spec.cause_mix.size() != catalog.causes.size()) {
    throw InvalidArgument("cause_mix must have one weight per cause");
  }
  double total = 0.0;
  double rare = 0.0;
  for (std::size_t i = 0; i < spec.cause_mix.size(); ++i) {
    if (!(spec.cause_mix[i] >= 0.0)) throw InvalidArgument("cause_mix weights must be >= 0");
    total += spec.cause_mix[i];
    if (catalog.causes[i].rarity == Rarity::Rare) rare += spec.cause_mix[i];
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("cause_mix must sum to 1");
  if (spec.name == Scenario::OffPeak && rare > 0.1 + 1e-9) {
    throw InvalidArgument("OffPeak rare-cause mass must be <= 0.1");
  }
  if (spec.name == Scenario::Peak && rare < 0.5 - 1e-9) {
    throw InvalidArgument("Peak rare-cause mass must be >= 0.5");
  }
  if (!(spec.noise_rate >= 0.0)) throw InvalidArgument("noise_rate must be >= 0");
  if (!(spec.noise_burst_mean >= 1.0)) throw InvalidArgument("noise_burst_mean must be >= 1");
  if (spec.noise_rate > 0.0 && catalog.noise_alarms.empty()) {
    throw InvalidArgument("noise requested but the catalog has no noise alarms");
  }
  if (spec.days < 1) throw InvalidArgument("days must be >= 1");
  if (spec.window_seconds < 0) throw InvalidArgument("window must be non-negative");
}

ScenarioData generate_scenario(const TopologyGraph& g, const FaultCatalog& catalog,
                               const ScenarioSpec& spec) {
  check_scenario(spec, catalog);
  const Timestamp w = spec.window_seconds;
  const Timestamp span = catalog.max_hop_delay() * static_cast<Timestamp>(g.size());
  // Root times in consecutive slots differ by more than 2w + span, so no
  // episode's records reach into another episode's window.
  const Timestamp half_slot = 2 * w + span + 1;
  const Timestamp slot = 2 * half_slot;
  const Timestamp range_start = spec.start_hour * kSecondsPerHour;
  const Timestamp range_end = spec.end_hour * kSecondsPerHour;
  const Timestamp usable = (range_end - w - span) - (range_start + w);
  const Timestamp per_day = usable > 0 ? usable / slot : 0;
  const Timestamp total_slots = per_day * spec.days;
  if (spec.n_episodes > total_slots) {
    throw InvalidArgument("infeasible spacing: " + std::to_string(spec.n_episodes) +
                          " episodes but only " + std::to_string(total_slots) + " slots");
  }

  // Episode placement and causes.
  Rng place_rng(derive_seed(spec.seed, "episodes"));
  std::vector<Timestamp> slots(static_cast<std::size_t>(total_slots));
  std::iota(slots.begin(), slots.end(), Timestamp{0});
  for (int i = 0; i < spec.n_episodes; ++i) {
    auto j = i + static_cast<std::size_t>(place_rng.below(slots.size() - i));
    std::swap(slots[i], slots[j]);
  }
  slots.resize(static_cast<std::size_t>(spec.n_episodes));
  std::sort(slots.begin(), slots.end());

  std::map<DeviceKind, std::vector<DeviceId>> by_kind;
  for (const auto& d : g.devices()) by_kind[d.kind].push_back(d.id);

  struct Tagged {
    AlarmRecord rec;
    int episode;  // -1 for noise
    bool root;
  };
  std::vector<Tagged> all;
  std::vector<FailureEpisode> episodes;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Timestamp day = slots[i] / per_day;
    const Timestamp k = slots[i] % per_day;
    const Timestamp t0 = day * kSecondsPerDay + range_start + w + k * slot +
                         static_cast<Timestamp>(place_rng.below(static_cast<std::uint64_t>(half_slot)));
    const auto cause = static_cast<CauseId>(place_rng.categorical(spec.cause_mix));
    std::vector<DeviceId> eligible;
    for (DeviceKind kind : catalog.cause(cause).applicable_kinds) {
      auto it = by_kind.find(kind);
      if (it != by_kind.end()) eligible.insert(eligible.end(), it->second.begin(), it->second.end());
    }
    if (eligible.empty()) {
      throw InvalidArgument("no device in the topology can host cause '" +
                            catalog.cause(cause).name + "'");
    }
    std::sort(eligible.begin(), eligible.end());
    const DeviceId root = eligible[place_rng.below(eligible.size())];
    FailureEpisode ep = inject_failure(g, catalog, cause, root, t0, derive_seed(spec.seed, i));
    for (std::size_t r = 0; r < ep.records.size(); ++r) {
      all.push_back({ep.records[r], static_cast<int>(i), r == 0});
    }
    episodes.push_back(std::move(ep));
  }

  // Background noise: compound Poisson events, each a burst of Warning
  // alarms on distinct random devices.
  if (spec.noise_rate > 0.0) {
    Rng noise_rng(derive_seed(spec.seed, "noise"));
    const double event_rate = spec.noise_rate / 60.0 / spec.noise_burst_mean;
    std::vector<Device> pool = g.devices();
    for (int day = 0; day < spec.days; ++day) {
      const double begin = static_cast<double>(day * kSecondsPerDay + range_start);
      const double end = static_cast<double>(day * kSecondsPerDay + range_end);
      double t = begin + noise_rng.exponential(event_rate);
      while (t < end) {
        const std::size_t burst = std::min<std::size_t>(
            pool.size(), 1 + noise_rng.poisson(spec.noise_burst_mean - 1.0));
        for (std::size_t b = 0; b < burst; ++b) {
          const std::string& name =
              catalog.noise_alarms[noise_rng.below(catalog.noise_alarms.size())];
          std::swap(pool[b], pool[b + noise_rng.below(pool.size() - b)]);
          const Timestamp ts = static_cast<Timestamp>(t) + static_cast<Timestamp>(noise_rng.below(5));
          if (ts >= static_cast<Timestamp>(end)) continue;
          AlarmRecord r;
          r.timestamp = ts;
          r.device_id = pool[b].id;
          r.alarm_name = name;
          r.severity = Severity::Warning;
          r.extras = device_extras(pool[b]);
          all.push_back({std::move(r), -1, false});
        }
        t += noise_rng.exponential(event_rate);
      }
    }
  }

  std::stable_sort(all.begin(), all.end(), [](const Tagged& x, const Tagged& y) {
    return x.rec.timestamp < y.rec.timestamp;
  });
  ScenarioData out;
  out.labels.resize(episodes.size());
  for (auto& ep : episodes) ep.records.clear();
  std::vector<AlarmRecord> records;
  records.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i].rec.record_id = static_cast<RecordId>(i);
    if (all[i].episode >= 0) {
      auto e = static_cast<std::size_t>(all[i].episode);
      episodes[e].records.push_back(all[i].rec);
      if (all[i].root) out.labels[e] = {all[i].rec.record_id, episodes[e].cause};
    }
    records.push_back(std::move(all[i].rec));
  }
  out.log = AlarmLog(std::move(records));
  out.episodes = std::move(episodes);
  return out;
}

ScenarioData merge_scenarios(const std::vector<ScenarioData>& parts) {
  struct Key {
    Timestamp t;
    std::size_t part;
    RecordId id;
  };
  std::vector<std::pair<Key, const AlarmRecord*>> all;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (const auto& r : parts[p].log.records()) {
      all.push_back({{r.timestamp.value_or(-1), p, r.record_id}, &r});
    }
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return std::tie(x.first.t, x.first.part, x.first.id) <
           std::tie(y.first.t, y.first.part, y.first.id);
  });
  std::map<std::pair<std::size_t, RecordId>, RecordId> renumber;
  std::vector<AlarmRecord> records;
  records.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    renumber[{all[i].first.part, all[i].first.id}] = static_cast<RecordId>(i);
    records.push_back(*all[i].second);
    records.back().record_id = static_cast<RecordId>(i);
  }
  ScenarioData out;
  out.log = AlarmLog(std::move(records));
  std::vector<std::pair<EpisodeLabel, FailureEpisode>> eps;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t e = 0; e < parts[p].labels.size(); ++e) {
      EpisodeLabel l = parts[p].labels[e];
      l.root_record = renumber.at({p, l.root_record});
      FailureEpisode ep = parts[p].episodes.at(e);
      for (auto& r : ep.records) r.record_id = renumber.at({p, r.record_id});
      eps.emplace_back(l, std::move(ep));
    }
  }
  std::sort(eps.begin(), eps.end(), [](const auto& x, const auto& y) {
    return x.first.root_record < y.first.root_record;
  });
  for (auto& [l, ep] : eps) {
    out.labels.push_back(l);
    out.episodes.push_back(std::move(ep));
  }
  return out;
}

}  // namespace telops
