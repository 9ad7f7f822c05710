#include "telops/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace telops {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string shortest(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) throw FormatError("config: " + std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw FormatError("config: unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void read_gnn(const json& obj, GnnHyperparams& hp, std::string_view where) {
  reject_unknown(obj, {"layers", "hidden", "heads", "leaky_slope", "lr", "epochs"}, where);
  read(obj, "layers", hp.layers);
  read(obj, "hidden", hp.hidden);
  read(obj, "heads", hp.heads);
  read(obj, "leaky_slope", hp.leaky_slope);
  read(obj, "lr", hp.lr);
  read(obj, "epochs", hp.epochs);
}

json write_gnn(const GnnHyperparams& hp) {
  return {{"layers", hp.layers}, {"hidden", hp.hidden},     {"heads", hp.heads},
          {"leaky_slope", hp.leaky_slope}, {"lr", hp.lr}, {"epochs", hp.epochs}};
}

std::string save_to_string(auto&& writer) {
  std::ostringstream os(std::ios::binary);
  writer(os);
  return os.str();
}

Matrix sample_matrix(const TrainedPipeline& p, const DiagnosisSample& s, const FeatureCaps& caps) {
  const VertexFeatures vf = vertex_features(s, p.embedding, p.vocab, p.graph.vertices(), caps);
  return feature_matrix(p.graph, vf, vf.dim);
}

}  // namespace

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{std::string(kMethodTelOps), std::string(kMethodFcGnn),
                                              std::string(kMethodMlp), std::string(kMethodForest)};
  return names;
}

const std::vector<Scenario>& report_scenarios() {
  static const std::vector<Scenario> s{Scenario::AllDay, Scenario::OffPeak, Scenario::Peak};
  return s;
}

void check_config(const ExperimentConfig& cfg, std::size_t classes) {
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    throw InvalidArgument("train_fraction must lie in (0, 1)");
  }
  if (cfg.offpeak_episodes < static_cast<int>(classes) || cfg.peak_episodes < static_cast<int>(classes)) {
    throw InvalidArgument("each scenario needs at least as many episodes as causes (" +
                          std::to_string(classes) + ")");
  }
  if (!(cfg.min_support > 0.0 && cfg.min_support <= 1.0) ||
      !(cfg.min_confidence > 0.0 && cfg.min_confidence <= 1.0)) {
    throw InvalidArgument("DAG thresholds must lie in (0, 1]");
  }
  if (cfg.skipgram.dim == 0) throw InvalidArgument("embedding dim must be positive");
  if (cfg.window_seconds < 0) throw InvalidArgument("window_seconds must be non-negative");
  check_hyperparams(cfg.gnn);
  check_hyperparams(cfg.fc_gnn);
  check_hyperparams(cfg.mlp);
  if (cfg.forest.trees == 0) throw InvalidArgument("forest needs at least one tree");
}

ExperimentConfig config_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    reject_unknown(doc,
                   {"seed", "catalog", "topology", "scenarios", "split", "dag", "embedding",
                    "features", "telops_gnn", "fc_gnn", "mlp", "forest"},
                   "config");
    read(doc, "seed", cfg.seed);
    if (auto it = doc.find("catalog"); it != doc.end() && !it->is_null()) {
      cfg.catalog_path = it->get<std::string>();
    }
    if (auto it = doc.find("topology"); it != doc.end()) {
      reject_unknown(*it, {"n_core", "n_agg", "n_bs", "cross_link_prob"}, "topology");
      read(*it, "n_core", cfg.topology.n_core);
      read(*it, "n_agg", cfg.topology.n_agg);
      read(*it, "n_bs", cfg.topology.n_bs);
      read(*it, "cross_link_prob", cfg.topology.cross_link_prob);
    }
    if (auto it = doc.find("scenarios"); it != doc.end()) {
      reject_unknown(*it,
                     {"offpeak_episodes", "peak_episodes", "offpeak_rare_mass", "peak_rare_mass",
                      "noise_rate", "noise_burst_mean", "days", "window_seconds"},
                     "scenarios");
      read(*it, "offpeak_episodes", cfg.offpeak_episodes);
      read(*it, "peak_episodes", cfg.peak_episodes);
      read(*it, "offpeak_rare_mass", cfg.offpeak_rare_mass);
      read(*it, "peak_rare_mass", cfg.peak_rare_mass);
      read(*it, "noise_rate", cfg.noise_rate);
      read(*it, "noise_burst_mean", cfg.noise_burst_mean);
      read(*it, "days", cfg.days);
      read(*it, "window_seconds", cfg.window_seconds);
    }
    if (auto it = doc.find("split"); it != doc.end()) {
      reject_unknown(*it, {"train_fraction"}, "split");
      read(*it, "train_fraction", cfg.train_fraction);
    }
    if (auto it = doc.find("dag"); it != doc.end()) {
      reject_unknown(*it, {"min_support", "min_confidence", "min_severity"}, "dag");
      read(*it, "min_support", cfg.min_support);
      read(*it, "min_confidence", cfg.min_confidence);
      if (auto sev = it->find("min_severity"); sev != it->end()) {
        cfg.mining_min_severity = parse_severity(sev->get<std::string>());
      }
    }
    if (auto it = doc.find("embedding"); it != doc.end()) {
      reject_unknown(*it, {"dim", "window", "negatives", "epochs", "lr", "min_count"}, "embedding");
      read(*it, "dim", cfg.skipgram.dim);
      read(*it, "window", cfg.skipgram.window);
      read(*it, "negatives", cfg.skipgram.negatives);
      read(*it, "epochs", cfg.skipgram.epochs);
      read(*it, "lr", cfg.skipgram.lr);
      read(*it, "min_count", cfg.vocab_min_count);
    }
    if (auto it = doc.find("features"); it != doc.end()) {
      reject_unknown(*it, {"record_count", "severity_rank", "distinct_alarms"}, "features");
      read(*it, "record_count", cfg.caps.record_count);
      read(*it, "severity_rank", cfg.caps.severity_rank);
      read(*it, "distinct_alarms", cfg.caps.distinct_alarms);
    }
    if (auto it = doc.find("telops_gnn"); it != doc.end()) read_gnn(*it, cfg.gnn, "telops_gnn");
    if (auto it = doc.find("fc_gnn"); it != doc.end()) read_gnn(*it, cfg.fc_gnn, "fc_gnn");
    if (auto it = doc.find("mlp"); it != doc.end()) {
      reject_unknown(*it, {"hidden1", "hidden2", "lr", "epochs"}, "mlp");
      read(*it, "hidden1", cfg.mlp.hidden1);
      read(*it, "hidden2", cfg.mlp.hidden2);
      read(*it, "lr", cfg.mlp.lr);
      read(*it, "epochs", cfg.mlp.epochs);
    }
    if (auto it = doc.find("forest"); it != doc.end()) {
      reject_unknown(
          *it, {"trees", "max_depth", "features_per_split", "min_samples_split", "bootstrap"},
          "forest");
      read(*it, "trees", cfg.forest.trees);
      read(*it, "max_depth", cfg.forest.max_depth);
      read(*it, "features_per_split", cfg.forest.features_per_split);
      read(*it, "min_samples_split", cfg.forest.min_samples_split);
      read(*it, "bootstrap", cfg.forest.bootstrap);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["catalog"] = cfg.catalog_path ? json(*cfg.catalog_path) : json(nullptr);
  doc["topology"] = {{"n_core", cfg.topology.n_core},
                     {"n_agg", cfg.topology.n_agg},
                     {"n_bs", cfg.topology.n_bs},
                     {"cross_link_prob", cfg.topology.cross_link_prob}};
  doc["scenarios"] = {{"offpeak_episodes", cfg.offpeak_episodes},
                      {"peak_episodes", cfg.peak_episodes},
                      {"offpeak_rare_mass", cfg.offpeak_rare_mass},
                      {"peak_rare_mass", cfg.peak_rare_mass},
                      {"noise_rate", cfg.noise_rate},
                      {"noise_burst_mean", cfg.noise_burst_mean},
                      {"days", cfg.days},
                      {"window_seconds", cfg.window_seconds}};
  doc["split"] = {{"train_fraction", cfg.train_fraction}};
  doc["dag"] = {{"min_support", cfg.min_support},
                {"min_confidence", cfg.min_confidence},
                {"min_severity", std::string(to_string(cfg.mining_min_severity))}};
  doc["embedding"] = {{"dim", cfg.skipgram.dim},       {"window", cfg.skipgram.window},
                      {"negatives", cfg.skipgram.negatives}, {"epochs", cfg.skipgram.epochs},
                      {"lr", cfg.skipgram.lr},         {"min_count", cfg.vocab_min_count}};
  doc["features"] = {{"record_count", cfg.caps.record_count},
                     {"severity_rank", cfg.caps.severity_rank},
                     {"distinct_alarms", cfg.caps.distinct_alarms}};
  doc["telops_gnn"] = write_gnn(cfg.gnn);
  doc["fc_gnn"] = write_gnn(cfg.fc_gnn);
  doc["mlp"] = {{"hidden1", cfg.mlp.hidden1},
                {"hidden2", cfg.mlp.hidden2},
                {"lr", cfg.mlp.lr},
                {"epochs", cfg.mlp.epochs}};
  doc["forest"] = {{"trees", cfg.forest.trees},
                   {"max_depth", cfg.forest.max_depth},
                   {"features_per_split", cfg.forest.features_per_split},
                   {"min_samples_split", cfg.forest.min_samples_split},
                   {"bootstrap", cfg.forest.bootstrap}};
  return doc.dump(2) + "\n";
}

FaultCatalog load_catalog(const ExperimentConfig& cfg) {
  if (!cfg.catalog_path) return default_catalog();
  std::ifstream in(*cfg.catalog_path);
  if (!in) throw InvalidArgument("cannot open catalog " + *cfg.catalog_path);
  std::stringstream ss;
  ss << in.rdbuf();
  FaultCatalog c = catalog_from_json(ss.str());
  check_catalog(c);
  return c;
}

GeneratedData generate_data(const ExperimentConfig& cfg) {
  GeneratedData out;
  out.catalog = load_catalog(cfg);
  check_config(cfg, out.catalog.size());
  TopologySpec tspec = cfg.topology;
  tspec.seed = derive_seed(cfg.seed, "topology");
  out.topology = generate_man_topology(tspec);

  auto scenario = [&](Scenario name, int n, double rare_mass, std::string_view tag) {
    ScenarioSpec s = make_scenario(name, out.catalog, n, rare_mass, cfg.noise_rate,
                                   derive_seed(cfg.seed, tag));
    s.noise_burst_mean = cfg.noise_burst_mean;
    s.days = cfg.days;
    s.window_seconds = cfg.window_seconds;
    check_scenario(s, out.catalog);
    return generate_scenario(out.topology, out.catalog, s);
  };
  out.data = merge_scenarios({scenario(Scenario::OffPeak, cfg.offpeak_episodes,
                                       cfg.offpeak_rare_mass, "offpeak"),
                              scenario(Scenario::Peak, cfg.peak_episodes, cfg.peak_rare_mass, "peak")});
  return out;
}

EpisodeSplit split_episodes(const AlarmLog& log, const std::vector<EpisodeLabel>& labels,
                            double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("train_fraction must lie in (0, 1)");
  }
  std::map<std::pair<Scenario, CauseId>, std::vector<EpisodeLabel>> cells;
  for (const auto& l : labels) {
    const AlarmRecord* r = log.find(l.root_record);
    if (!r || !r->timestamp) {
      throw InvalidArgument("label references missing record " + std::to_string(l.root_record));
    }
    cells[{scenario_of(*r->timestamp), l.cause}].push_back(l);
  }
  Rng rng(derive_seed(seed, "split"));
  EpisodeSplit out;
  std::map<Scenario, std::size_t> test_count;
  for (auto& [key, cell] : cells) {
    std::sort(cell.begin(), cell.end(),
              [](const EpisodeLabel& x, const EpisodeLabel& y) { return x.root_record < y.root_record; });
    for (std::size_t i = 0; i + 1 < cell.size(); ++i) {
      std::swap(cell[i], cell[i + rng.below(cell.size() - i)]);
    }
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(cell.size())));
    for (std::size_t i = 0; i < cell.size(); ++i) {
      (i < n_train ? out.train : out.test).push_back(cell[i]);
    }
    test_count[key.first] += cell.size() - n_train;
  }
  for (Scenario s : {Scenario::OffPeak, Scenario::Peak}) {
    if (test_count[s] == 0) {
      throw InvalidArgument("empty scenario cell: no " + std::string(to_string(s)) +
                            " episodes in the test split");
    }
  }
  auto by_root = [](const EpisodeLabel& x, const EpisodeLabel& y) { return x.root_record < y.root_record; };
  std::sort(out.train.begin(), out.train.end(), by_root);
  std::sort(out.test.begin(), out.test.end(), by_root);
  return out;
}

std::vector<DiagnosisSample> extract_samples(const AlarmLog& log,
                                             const std::vector<EpisodeLabel>& labels,
                                             Timestamp window_seconds) {
  std::vector<DiagnosisSample> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    DiagnosisSample s = extract_sample(log, l.root_record, window_seconds);
    s.label = l.cause;
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, std::string> TrainedPipeline::checkpoints() const {
  std::map<std::string, std::string> out;
  out["dag.json"] = dag_to_json(dag);
  out["vocab.json"] = vocab_to_json(vocab);
  out["embedding.bin"] = save_to_string([&](std::ostream& os) { save_embedding(os, embedding, vocab.hash()); });
  out["telops-gnn.ckpt"] = save_to_string([&](std::ostream& os) { save_gnn(os, telops); });
  out["fc-gnn.ckpt"] = save_to_string([&](std::ostream& os) { save_fc_gnn(os, fc_gnn); });
  out["mlp.ckpt"] = save_to_string([&](std::ostream& os) { save_mlp(os, mlp); });
  out["random-forest.ckpt"] = save_to_string([&](std::ostream& os) { save_forest(os, forest); });
  return out;
}

TrainedPipeline train_pipeline(const std::vector<DiagnosisSample>& train,
                               const TopologyGraph& topology, const FaultCatalog& catalog,
                               const ExperimentConfig& cfg) {
  TrainedPipeline p;
  const std::size_t classes = catalog.size();

  stage("mine-dag", [&] {
    std::vector<DiagnosisSample> salient = train;
    for (auto& s : salient) {
      std::erase_if(s.records, [&](const AlarmRecord& r) { return r.severity < cfg.mining_min_severity; });
    }
    const CooccurrenceStats stats = mine_cooccurrence(salient);
    const AssociationDag mined = build_dag(stats, cfg.min_support, cfg.min_confidence);
    DirectedGraph g;
    std::set<DeviceId> ids(mined.vertices().begin(), mined.vertices().end());
    for (const auto& d : topology.devices()) ids.insert(d.id);
    g.vertices.assign(ids.begin(), ids.end());
    g.edges = mined.edges();
    p.dag = AssociationDag(std::move(g));
    p.graph = MessageGraph::from_dag(p.dag);
  });

  stage("embed", [&] {
    std::vector<AlarmLog> logs;
    logs.reserve(train.size());
    for (const auto& s : train) logs.emplace_back(s.records);
    p.vocab = build_vocab(logs, cfg.vocab_min_count);
    SkipGramParams sg = cfg.skipgram;
    sg.seed = derive_seed(cfg.seed, "skipgram");
    p.embedding = train_skipgram(skipgram_corpus(train, p.vocab), p.vocab.size(), sg);
  });

  std::vector<GraphSample> graph_samples;
  std::vector<MlpSample> mlp_samples;
  std::vector<ForestSample> forest_samples;
  stage("features", [&] {
    for (const auto& s : train) {
      if (!s.label) throw InvalidArgument("training sample without a label");
      Matrix x = sample_matrix(p, s, cfg.caps);
      mlp_samples.push_back({pooled_features(x, s), *s.label});
      graph_samples.push_back({std::move(x), *s.label});
      forest_samples.push_back({forest_features(s, catalog), *s.label});
    }
  });

  const std::uint64_t vocab_hash = p.vocab.hash();
  auto timed = [&](const std::string& method, auto&& body) {
    stage("train " + method, [&] {
      const auto start = Clock::now();
      body();
      p.train_seconds[method] = seconds_since(start);
    });
  };
  timed(std::string(kMethodTelOps), [&] {
    GnnHyperparams hp = cfg.gnn;
    hp.classes = classes;
    hp.seed = derive_seed(cfg.seed, kMethodTelOps);
    TrainingLog log;
    p.telops = telops::train(p.graph, graph_samples, hp, &log);
    p.telops.vocab_hash = vocab_hash;
    p.warnings[std::string(kMethodTelOps)] = log.warnings;
  });
  timed(std::string(kMethodFcGnn), [&] {
    GnnHyperparams hp = cfg.fc_gnn;
    hp.classes = classes;
    hp.seed = derive_seed(cfg.seed, kMethodFcGnn);
    TrainingLog log;
    p.fc_gnn = train_fc_gnn(p.graph.vertices(), graph_samples, hp, &log);
    p.fc_gnn.inner.vocab_hash = vocab_hash;
    p.warnings[std::string(kMethodFcGnn)] = log.warnings;
  });
  timed(std::string(kMethodMlp), [&] {
    MlpHyperparams hp = cfg.mlp;
    hp.classes = classes;
    hp.seed = derive_seed(cfg.seed, kMethodMlp);
    TrainingLog log;
    p.mlp = train_mlp(mlp_samples, hp, &log);
    p.mlp.vocab_hash = vocab_hash;
    p.warnings[std::string(kMethodMlp)] = log.warnings;
  });
  timed(std::string(kMethodForest), [&] {
    ForestParams fp = cfg.forest;
    fp.classes = classes;
    fp.seed = derive_seed(cfg.seed, kMethodForest);
    p.forest = train_forest(forest_samples, fp);
  });
  return p;
}

std::map<std::string, Diagnosis> predict_all(const TrainedPipeline& p, const DiagnosisSample& sample,
                                             const FaultCatalog& catalog, const FeatureCaps& caps) {
  std::map<std::string, Diagnosis> out;
  const Matrix x = sample_matrix(p, sample, caps);
  out[std::string(kMethodTelOps)] = forward(p.telops, x);
  out[std::string(kMethodFcGnn)] = forward(p.fc_gnn, x);
  out[std::string(kMethodMlp)] = forward(p.mlp, pooled_features(x, sample));
  out[std::string(kMethodForest)] = forward(p.forest, forest_features(sample, catalog));
  return out;
}

bool ResultTable::complete() const {
  for (const auto& m : method_names()) {
    for (Scenario s : report_scenarios()) {
      if (!accuracy.contains({m, s}) || !counts.contains({m, s})) return false;
    }
  }
  return true;
}

double ResultTable::at(std::string_view method, Scenario s) const {
  auto it = accuracy.find({std::string(method), s});
  if (it == accuracy.end()) throw InvalidArgument("incomplete table");
  return it->second;
}

ResultTable evaluate(const TrainedPipeline& p, const std::vector<DiagnosisSample>& test,
                     const FaultCatalog& catalog, const FeatureCaps& caps) {
  ResultTable t;
  for (const auto& m : method_names()) {
    for (Scenario s : report_scenarios()) t.counts[{m, s}] = {};
    for (std::size_t c = 0; c < catalog.size(); ++c) t.per_class[{m, static_cast<CauseId>(c)}] = {};
  }
  for (const auto& sample : test) {
    if (!sample.label) throw InvalidArgument("test sample without a label");
    const Scenario sc = scenario_of(sample.root_time);
    for (const auto& [method, d] : predict_all(p, sample, catalog, caps)) {
      const bool hit = d.cause == *sample.label;
      for (Scenario s : {Scenario::AllDay, sc}) {
        auto& cell = t.counts[{method, s}];
        ++cell.total;
        cell.correct += hit ? 1 : 0;
      }
      auto& pc = t.per_class[{method, *sample.label}];
      ++pc.total;
      pc.correct += hit ? 1 : 0;
    }
  }
  for (const auto& [key, cell] : t.counts) {
    t.accuracy[key] = cell.total == 0 ? 0.0
                                      : static_cast<double>(cell.correct) / static_cast<double>(cell.total);
  }
  t.train_seconds = p.train_seconds;
  return t;
}

ExperimentRun run_experiment_full(const ExperimentConfig& cfg) {
  ExperimentRun run;
  run.generated = stage("generate", [&] { return generate_data(cfg); });
  std::vector<DiagnosisSample> train, test;
  stage("ingest", [&] {
    const AlarmLog cleaned = clean(run.generated.data.log);
    run.split = split_episodes(cleaned, run.generated.data.labels, cfg.train_fraction, cfg.seed);
    train = extract_samples(cleaned, run.split.train, cfg.window_seconds);
    test = extract_samples(cleaned, run.split.test, cfg.window_seconds);
  });
  run.pipeline = train_pipeline(train, run.generated.topology, run.generated.catalog, cfg);
  run.results = stage("evaluate", [&] {
    return evaluate(run.pipeline, test, run.generated.catalog, cfg.caps);
  });
  return run;
}

ResultTable run_experiment(const ExperimentConfig& cfg) { return run_experiment_full(cfg).results; }

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

std::string report_csv(const ResultTable& t) {
  if (!t.complete()) throw InvalidArgument("incomplete table");
  std::string out = "method,scenario,accuracy,correct,total\n";
  for (const auto& m : method_names()) {
    for (Scenario s : report_scenarios()) {
      const auto& c = t.counts.at({m, s});
      out += m + "," + std::string(to_string(s)) + "," + shortest(t.accuracy.at({m, s})) + "," +
             std::to_string(c.correct) + "," + std::to_string(c.total) + "\n";
    }
  }
  return out;
}

ResultTable parse_results_csv(std::string_view text) {
  ResultTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      if (line != "method,scenario,accuracy,correct,total") throw FormatError("results: bad header");
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw FormatError("results: line " + std::to_string(line_no) + " needs 5 fields");
    double acc = 0.0;
    std::size_t correct = 0, total = 0;
    auto bad = [&](auto r, const std::string& s) { return r.ec != std::errc{} || r.ptr != s.data() + s.size(); };
    if (bad(std::from_chars(f[2].data(), f[2].data() + f[2].size(), acc), f[2]) ||
        bad(std::from_chars(f[3].data(), f[3].data() + f[3].size(), correct), f[3]) ||
        bad(std::from_chars(f[4].data(), f[4].data() + f[4].size(), total), f[4])) {
      throw FormatError("results: bad number on line " + std::to_string(line_no));
    }
    const Scenario s = parse_scenario(f[1]);
    t.accuracy[{f[0], s}] = acc;
    t.counts[{f[0], s}] = {correct, total};
  }
  if (header) throw FormatError("results: empty file");
  return t;
}

std::string report_text(const ResultTable& t) {
  if (!t.complete()) throw InvalidArgument("incomplete table");
  std::ostringstream os;
  for (Scenario s : report_scenarios()) {
    os << to_string(s) << " (n=" << t.counts.at({method_names().front(), s}).total << ")\n";
    for (const auto& m : method_names()) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "  %-15s %7s\n", m.c_str(), format_percent(t.at(m, s)).c_str());
      os << buf;
    }
  }
  return os.str();
}

std::string recall_csv(const ResultTable& t) {
  std::string out = "method,cause,correct,total,recall\n";
  for (const auto& m : method_names()) {
    for (const auto& [key, c] : t.per_class) {
      if (key.first != m) continue;
      const double r = c.total == 0 ? 0.0 : static_cast<double>(c.correct) / static_cast<double>(c.total);
      out += m + "," + std::to_string(key.second) + "," + std::to_string(c.correct) + "," +
             std::to_string(c.total) + "," + shortest(r) + "\n";
    }
  }
  return out;
}

std::string timings_csv(const ResultTable& t) {
  std::string out = "method,train_seconds\n";
  for (const auto& [m, sec] : t.train_seconds) out += m + "," + shortest(sec) + "\n";
  return out;
}

std::map<std::pair<std::string, Scenario>, double> mean_accuracy(const std::vector<ResultTable>& runs) {
  std::map<std::pair<std::string, Scenario>, double> out;
  if (runs.empty()) return out;
  for (const auto& r : runs) {
    for (const auto& [key, acc] : r.accuracy) out[key] += acc;
  }
  for (auto& [key, acc] : out) acc /= static_cast<double>(runs.size());
  return out;
}

}  // namespace telops
