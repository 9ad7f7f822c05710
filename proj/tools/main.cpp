// telops: command-line front end for the diagnosis pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "telops/harness.hpp"

namespace fs = std::filesystem;
using namespace telops;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

template <typename F>
std::string to_bytes(F&& writer) {
  std::ostringstream os(std::ios::binary);
  writer(os);
  return os.str();
}

FaultCatalog catalog_at(const std::string& path) {
  if (path.empty()) return default_catalog();
  FaultCatalog c = catalog_from_json(read_file(path));
  check_catalog(c);
  return c;
}

AlarmLog load_log(const std::string& path, const std::string& schema_path) {
  const LogSchema schema = schema_path.empty() ? LogSchema::standard() : schema_from_json(read_file(schema_path));
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  ParseResult r = parse_log(in, schema);
  if (r.skipped > 0) std::cerr << "skipped " << r.skipped << " malformed lines in " << path << "\n";
  return clean(r.log, KeyFields::from_schema(schema));
}

std::vector<EpisodeLabel> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return read_labels(in);
}

struct SampleInputs {
  std::string log, labels, schema;
  Timestamp window = kDefaultWindowSeconds;

  void add(CLI::App* cmd) {
    cmd->add_option("--log", log, "Alarm log (tab-separated)")->required();
    cmd->add_option("--labels", labels, "Episode labels file")->required();
    cmd->add_option("--schema", schema, "Log schema JSON (default: standard layout)");
    cmd->add_option("--window", window, "Half window in seconds");
  }
  std::vector<DiagnosisSample> samples() const {
    return extract_samples(load_log(log, schema), load_labels(labels), window);
  }
};

struct Learned {
  std::string dag, vocab, embedding;

  void add(CLI::App* cmd) {
    cmd->add_option("--dag", dag, "Association DAG JSON")->required();
    cmd->add_option("--vocab", vocab, "Vocabulary JSON")->required();
    cmd->add_option("--embedding", embedding, "Embedding checkpoint")->required();
  }
  AssociationDag load_dag() const { return dag_from_json(read_file(dag)); }
  Vocabulary load_vocab() const { return vocab_from_json(read_file(vocab)); }
  EmbeddingMatrix load_embedding(const Vocabulary& v) const {
    std::ifstream in(embedding, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + embedding);
    return telops::load_embedding(in, v.hash());
  }
};

const std::vector<std::string> kMethods{"telops-gnn", "fc-gnn", "mlp", "random-forest"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alarm-flood root cause diagnosis over mined device associations"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  app.add_option("--seed", seed, "Global seed")->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for outputs")->capture_default_str();

  // gen-topo
  auto* gen = app.add_subcommand("gen-topo", "Generate a three-tier access network topology");
  TopologySpec tspec;
  gen->add_option("--n-core", tspec.n_core)->capture_default_str();
  gen->add_option("--n-agg", tspec.n_agg)->capture_default_str();
  gen->add_option("--n-bs", tspec.n_bs)->capture_default_str();
  gen->add_option("--cross-link-prob", tspec.cross_link_prob)->capture_default_str();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Inject failures and background noise into a topology");
  std::string sim_topo, sim_catalog, sim_scenario = "AllDay";
  int sim_episodes = 100;
  double sim_rare = 0.2, sim_noise = 0.5, sim_burst = 1.0;
  int sim_days = 7;
  sim->add_option("--topology", sim_topo, "Topology JSON")->required();
  sim->add_option("--catalog", sim_catalog, "Fault catalog JSON (default built in)");
  sim->add_option("--scenario", sim_scenario, "AllDay, OffPeak or Peak")->capture_default_str();
  sim->add_option("--episodes", sim_episodes)->capture_default_str();
  sim->add_option("--rare-mass", sim_rare)->capture_default_str();
  sim->add_option("--noise-rate", sim_noise, "Background alarms per minute")->capture_default_str();
  sim->add_option("--noise-burst", sim_burst, "Mean alarms per background event")->capture_default_str();
  sim->add_option("--days", sim_days)->capture_default_str();

  // mine-dag
  auto* mine = app.add_subcommand("mine-dag", "Mine the device association DAG");
  SampleInputs mine_in;
  mine_in.add(mine);
  double min_support = 0.01, min_confidence = 0.3;
  mine->add_option("--min-support", min_support)->capture_default_str();
  mine->add_option("--min-confidence", min_confidence)->capture_default_str();

  // embed
  auto* embed = app.add_subcommand("embed", "Train alarm-token embeddings");
  SampleInputs embed_in;
  embed_in.add(embed);
  SkipGramParams sg;
  std::size_t min_count = 1;
  embed->add_option("--dim", sg.dim)->capture_default_str();
  embed->add_option("--epochs", sg.epochs)->capture_default_str();
  embed->add_option("--min-count", min_count)->capture_default_str();

  // train
  auto* trn = app.add_subcommand("train", "Train one diagnosis model");
  std::string method;
  trn->add_option("method", method, "telops-gnn, fc-gnn, mlp or random-forest")
      ->required()
      ->check(CLI::IsMember(kMethods));
  SampleInputs train_in;
  train_in.add(trn);
  Learned train_learned;
  train_learned.add(trn);
  std::string train_catalog;
  std::size_t epochs = 200;
  trn->add_option("--catalog", train_catalog, "Fault catalog JSON (default built in)");
  trn->add_option("--epochs", epochs, "Epochs for gradient-trained models")->capture_default_str();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Diagnose the episode anchored at a root record");
  std::string diag_model, diag_log, diag_schema, diag_catalog;
  std::string diag_method = "telops-gnn";
  RecordId diag_root = 0;
  Timestamp diag_window = kDefaultWindowSeconds;
  Learned diag_learned;
  diag_learned.add(diag);
  diag->add_option("--method", diag_method)->check(CLI::IsMember(kMethods))->capture_default_str();
  diag->add_option("--model", diag_model, "Model checkpoint")->required();
  diag->add_option("--log", diag_log, "Alarm log")->required();
  diag->add_option("--schema", diag_schema, "Log schema JSON");
  diag->add_option("--root", diag_root, "Root record id")->required();
  diag->add_option("--window", diag_window)->capture_default_str();
  diag->add_option("--catalog", diag_catalog, "Fault catalog JSON (default built in)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Run the full experiment from a config file");
  std::string config_path;
  bool keep_checkpoints = false;
  eval->add_option("--config", config_path, "Experiment config JSON (defaults when omitted)");
  eval->add_flag("--checkpoints", keep_checkpoints, "Also write trained artifacts");

  // weak-links
  auto* weak = app.add_subcommand("weak-links", "List links whose loss disconnects the network");
  std::string weak_topo;
  weak->add_option("--topology", weak_topo, "Topology JSON")->required();

  // report
  auto* rep = app.add_subcommand("report", "Render a results CSV as a text table");
  std::string results_path;
  rep->add_option("--results", results_path, "results.csv from evaluate")->required();

  CLI11_PARSE(app, argc, argv);

  const fs::path out(out_dir);
  std::string current = app.get_subcommands().front()->get_name();
  try {
    if (gen->parsed()) {
      tspec.seed = seed;
      const TopologyGraph g = generate_man_topology(tspec);
      write_file(out / "topology.json", topology_to_json(g));
      std::cout << g.size() << " devices, " << g.links().size() << " links\n";
    } else if (sim->parsed()) {
      const TopologyGraph g = topology_from_json(read_file(sim_topo));
      const FaultCatalog catalog = catalog_at(sim_catalog);
      ScenarioSpec spec = make_scenario(parse_scenario(sim_scenario), catalog, sim_episodes, sim_rare,
                                        sim_noise, seed);
      spec.noise_burst_mean = sim_burst;
      spec.days = sim_days;
      check_scenario(spec, catalog);
      const ScenarioData data = generate_scenario(g, catalog, spec);
      write_file(out / "alarms.tsv", to_bytes([&](std::ostream& os) {
                   write_log(os, data.log, LogSchema::standard());
                 }));
      write_file(out / "labels.txt", to_bytes([&](std::ostream& os) { write_labels(os, data.labels); }));
      std::cout << data.log.size() << " records, " << data.labels.size() << " episodes\n";
    } else if (mine->parsed()) {
      const auto samples = mine_in.samples();
      const AssociationDag dag = build_dag(mine_cooccurrence(samples), min_support, min_confidence);
      write_file(out / "dag.json", dag_to_json(dag));
      std::cout << dag.vertices().size() << " vertices, " << dag.edges().size() << " edges\n";
    } else if (embed->parsed()) {
      const auto samples = embed_in.samples();
      std::vector<AlarmLog> logs;
      for (const auto& s : samples) logs.emplace_back(s.records);
      const Vocabulary vocab = build_vocab(logs, min_count);
      sg.seed = derive_seed(seed, "skipgram");
      const EmbeddingMatrix emb = train_skipgram(skipgram_corpus(samples, vocab), vocab.size(), sg);
      write_file(out / "vocab.json", vocab_to_json(vocab));
      write_file(out / "embedding.bin",
                 to_bytes([&](std::ostream& os) { save_embedding(os, emb, vocab.hash()); }));
      std::cout << vocab.size() << " tokens, dim " << emb.dim << "\n";
    } else if (trn->parsed()) {
      const auto samples = train_in.samples();
      const FaultCatalog catalog = catalog_at(train_catalog);
      const AssociationDag dag = train_learned.load_dag();
      const Vocabulary vocab = train_learned.load_vocab();
      const EmbeddingMatrix emb = train_learned.load_embedding(vocab);
      const MessageGraph graph = MessageGraph::from_dag(dag);
      const FeatureCaps caps;
      std::vector<GraphSample> gs;
      std::vector<MlpSample> ms;
      std::vector<ForestSample> fs_;
      for (const auto& s : samples) {
        const VertexFeatures vf = vertex_features(s, emb, vocab, graph.vertices(), caps);
        Matrix x = feature_matrix(graph, vf, vf.dim);
        ms.push_back({pooled_features(x, s), *s.label});
        gs.push_back({std::move(x), *s.label});
        fs_.push_back({forest_features(s, catalog), *s.label});
      }
      const std::uint64_t model_seed = derive_seed(seed, method);
      std::string bytes;
      TrainingLog log;
      if (method == "telops-gnn" || method == "fc-gnn") {
        GnnHyperparams hp;
        hp.classes = catalog.size();
        hp.epochs = epochs;
        hp.seed = model_seed;
        if (method == "telops-gnn") {
          GnnModel m = train(graph, gs, hp, &log);
          m.vocab_hash = vocab.hash();
          bytes = to_bytes([&](std::ostream& os) { save_gnn(os, m); });
        } else {
          FcGnnModel m = train_fc_gnn(graph.vertices(), gs, hp, &log);
          m.inner.vocab_hash = vocab.hash();
          bytes = to_bytes([&](std::ostream& os) { save_fc_gnn(os, m); });
        }
      } else if (method == "mlp") {
        MlpHyperparams hp;
        hp.classes = catalog.size();
        hp.epochs = epochs;
        hp.seed = model_seed;
        MlpModel m = train_mlp(ms, hp, &log);
        m.vocab_hash = vocab.hash();
        bytes = to_bytes([&](std::ostream& os) { save_mlp(os, m); });
      } else {
        ForestParams fp;
        fp.classes = catalog.size();
        fp.seed = model_seed;
        const ForestModel m = train_forest(fs_, fp);
        bytes = to_bytes([&](std::ostream& os) { save_forest(os, m); });
      }
      for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
      write_file(out / (method + ".ckpt"), bytes);
      if (!log.loss_history.empty()) {
        std::cout << "loss " << log.loss_history.front() << " -> " << log.loss_history.back() << "\n";
      }
    } else if (diag->parsed()) {
      const AlarmLog log = load_log(diag_log, diag_schema);
      const DiagnosisSample sample = extract_sample(log, diag_root, diag_window);
      const FaultCatalog catalog = catalog_at(diag_catalog);
      const AssociationDag dag = diag_learned.load_dag();
      const Vocabulary vocab = diag_learned.load_vocab();
      const EmbeddingMatrix emb = diag_learned.load_embedding(vocab);
      const MessageGraph graph = MessageGraph::from_dag(dag);
      std::ifstream in(diag_model, std::ios::binary);
      if (!in) throw InvalidArgument("cannot open " + diag_model);
      const FeatureCaps caps;
      auto matrix = [&] {
        const VertexFeatures vf = vertex_features(sample, emb, vocab, graph.vertices(), caps);
        return feature_matrix(graph, vf, vf.dim);
      };
      Diagnosis d;
      if (diag_method == "telops-gnn") {
        d = forward(load_gnn(in, graph, vocab.hash()), matrix());
      } else if (diag_method == "fc-gnn") {
        d = forward(load_fc_gnn(in, graph.vertices(), vocab.hash()), matrix());
      } else if (diag_method == "mlp") {
        d = forward(load_mlp(in, vocab.hash()), pooled_features(matrix(), sample));
      } else {
        d = forward(load_forest(in), forest_features(sample, catalog));
      }
      std::cout << "cause " << d.cause << " (" << catalog.cause(d.cause).name << ")\n";
      for (std::size_t c = 0; c < d.distribution.size(); ++c) {
        std::cout << "  " << c << " " << catalog.cause(static_cast<CauseId>(c)).name << " "
                  << format_percent(d.distribution[c]) << "\n";
      }
    } else if (eval->parsed()) {
      current = "config";
      ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : config_from_json(read_file(config_path));
      if (app.get_option("--seed")->count() > 0) cfg.seed = seed;
      const ExperimentRun run = run_experiment_full(cfg);
      current = "report";
      write_file(out / "results.csv", report_csv(run.results));
      write_file(out / "report.txt", report_text(run.results));
      write_file(out / "recall.csv", recall_csv(run.results));
      write_file(out / "timings.csv", timings_csv(run.results));
      write_file(out / "config.json", config_to_json(cfg));
      if (keep_checkpoints) {
        for (const auto& [name, bytes] : run.pipeline.checkpoints()) write_file(out / name, bytes);
      }
      std::cout << report_text(run.results);
    } else if (weak->parsed()) {
      const TopologyGraph g = topology_from_json(read_file(weak_topo));
      for (const auto& l : find_weak_links(g)) std::cout << l.a << " " << l.b << "\n";
    } else if (rep->parsed()) {
      std::cout << report_text(parse_results_csv(read_file(results_path)));
    }
  } catch (const StageError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error in stage " << current << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
