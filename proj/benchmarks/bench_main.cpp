#include <benchmark/benchmark.h>

#include "telops/baselines.hpp"
#include "telops/embedding.hpp"
#include "telops/gnn.hpp"
#include "telops/topology.hpp"

using namespace telops;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
  return m;
}

MessageGraph chain_graph(std::size_t n) {
  std::vector<DeviceId> v(n);
  std::vector<std::pair<DeviceId, DeviceId>> e;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = static_cast<DeviceId>(i);
    if (i > 0) e.emplace_back(static_cast<DeviceId>(i - 1), static_cast<DeviceId>(i));
    if (i > 1) e.emplace_back(static_cast<DeviceId>(i - 2), static_cast<DeviceId>(i));
  }
  return MessageGraph(std::move(v), std::move(e));
}

void BM_GnnForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  GnnHyperparams hp;
  hp.classes = 8;
  const GnnModel model = init_gnn(chain_graph(n), 35, hp);
  const Matrix x = random_matrix(n, 35, 7);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, x));
}
BENCHMARK(BM_GnnForward)->Arg(22)->Arg(64);

void BM_GnnGradients(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  GnnHyperparams hp;
  hp.classes = 8;
  const GnnModel model = init_gnn(chain_graph(n), 35, hp);
  const std::vector<GraphSample> batch{{random_matrix(n, 35, 7), 3}};
  for (auto _ : state) benchmark::DoNotOptimize(gradients(model, batch));
}
BENCHMARK(BM_GnnGradients)->Arg(22)->Arg(64);

void BM_FcGnnGradients(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  GnnHyperparams hp;
  hp.classes = 8;
  std::vector<DeviceId> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<DeviceId>(i);
  const GnnModel model = init_gnn(MessageGraph::complete(v), 35, hp);
  const std::vector<GraphSample> batch{{random_matrix(n, 35, 7), 3}};
  for (auto _ : state) benchmark::DoNotOptimize(gradients(model, batch));
}
BENCHMARK(BM_FcGnnGradients)->Arg(22)->Arg(64);

void BM_SkipGramEpoch(benchmark::State& state) {
  Rng rng(3);
  std::vector<std::vector<int>> corpus(500);
  for (auto& seq : corpus) {
    seq.resize(12);
    for (int& t : seq) t = static_cast<int>(1 + rng.below(60));
  }
  SkipGramParams p;
  p.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_skipgram(corpus, 61, p));
}
BENCHMARK(BM_SkipGramEpoch);

void BM_WeakLinks(benchmark::State& state) {
  TopologySpec spec;
  spec.n_core = 4;
  spec.n_agg = static_cast<int>(state.range(0)) / 8;
  spec.n_bs = static_cast<int>(state.range(0));
  spec.seed = 5;
  const TopologyGraph g = generate_man_topology(spec);
  for (auto _ : state) benchmark::DoNotOptimize(find_weak_links(g));
}
BENCHMARK(BM_WeakLinks)->Arg(64)->Arg(1024);

void BM_ForestTrain(benchmark::State& state) {
  Rng rng(11);
  std::vector<ForestSample> rows(480);
  for (auto& r : rows) {
    r.input.resize(12);
    for (double& x : r.input) x = static_cast<double>(rng.below(10));
    r.label = static_cast<CauseId>(rng.below(8));
  }
  ForestParams fp;
  fp.classes = 8;
  for (auto _ : state) benchmark::DoNotOptimize(train_forest(rows, fp));
}
BENCHMARK(BM_ForestTrain);

}  // namespace
BENCHMARK_MAIN();
