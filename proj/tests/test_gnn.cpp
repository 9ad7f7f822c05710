#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "support/oracles.hpp"
#include "telops/gnn.hpp"

using namespace telops;

namespace {

GnnHyperparams small_hp(std::size_t classes = 3) {
  GnnHyperparams hp;
  hp.layers = 2;
  hp.hidden = 3;
  hp.heads = 2;
  hp.classes = classes;
  hp.epochs = 0;
  return hp;
}

Matrix random_features(Rng& rng, std::size_t n, std::size_t d, bool with_zero_row = true) {
  Matrix x(n, d);
  for (auto& v : x.data()) v = rng.uniform(-1.0, 1.0);
  if (with_zero_row && n > 2) {
    for (auto& v : x.row(n - 1)) v = 0.0;
  }
  return x;
}

// Parameters drawn wide enough that attention is far from uniform.
GnnModel random_model(Rng& rng, const MessageGraph& g, std::size_t in_dim, const GnnHyperparams& hp) {
  GnnModel m = init_gnn(g, in_dim, hp);
  for (auto& p : m.params) p = rng.uniform(-1.0, 1.0);
  return m;
}

MessageGraph five_vertex_dag() {
  return MessageGraph({10, 20, 30, 40, 50}, {{10, 20}, {10, 30}, {20, 40}, {30, 40}, {40, 50}});
}

MessageGraph random_graph(Rng& rng, std::size_t n) {
  std::vector<DeviceId> vs;
  for (std::size_t i = 0; i < n; ++i) vs.push_back(static_cast<DeviceId>(100 + 7 * i));
  std::vector<std::pair<DeviceId, DeviceId>> es;
  for (DeviceId u : vs) {
    for (DeviceId v : vs) {
      if (u != v && rng.bernoulli(0.3)) es.emplace_back(u, v);
    }
  }
  return MessageGraph(vs, es);
}

}  // namespace

TEST_CASE("message graph neighbourhoods") {
  const auto g = five_vertex_dag();
  CHECK(g.neighborhood(0) == std::vector<std::size_t>{0});
  CHECK(g.neighborhood(3) == std::vector<std::size_t>{1, 2, 3});
  CHECK(MessageGraph::complete({3, 1, 2}).neighborhood(1) == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(MessageGraph({1, 1}, {}), InvalidArgument);
  CHECK_THROWS_AS(MessageGraph({1, 2}, {{1, 3}}), InvalidArgument);
  CHECK(g.hash() != MessageGraph::complete(g.vertices()).hash());
}

TEST_CASE("single vertex attends only to itself") {
  Rng rng(1);
  const MessageGraph g({7}, {});
  const auto m = random_model(rng, g, 4, small_hp());
  const auto tr = trace_forward(m, random_features(rng, 1, 4));
  for (const auto& layer : tr.alpha) {
    for (const auto& head : layer) {
      REQUIRE(head[0].size() == 1);
      CHECK(head[0][0].first == 0);
      CHECK(head[0][0].second == 1.0);
    }
  }
}

TEST_CASE("attention rows and outputs are distributions") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const auto g = random_graph(rng, n);
    auto hp = small_hp(2 + rng.below(4));
    hp.layers = 1 + rng.below(3);
    hp.heads = 1 + rng.below(3);
    const auto m = random_model(rng, g, 5, hp);
    const auto tr = trace_forward(m, random_features(rng, n, 5));
    for (const auto& layer : tr.alpha) {
      for (const auto& head : layer) {
        for (const auto& row : head) {
          double s = 0.0;
          for (const auto& [u, a] : row) {
            CHECK(a >= 0.0);
            s += a;
          }
          CHECK(std::abs(s - 1.0) <= 1e-6);
        }
      }
    }
    CHECK(std::abs(std::accumulate(tr.distribution.begin(), tr.distribution.end(), 0.0) - 1.0) <= 1e-6);
  }
}

TEST_CASE("forward matches a dense re-implementation") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const auto g = random_graph(rng, n);
    auto hp = small_hp(2 + rng.below(3));
    hp.layers = 1 + rng.below(3);
    hp.heads = 1 + rng.below(3);
    hp.leaky_slope = rng.uniform(0.0, 0.5);
    const auto m = random_model(rng, g, 4, hp);
    const auto x = random_features(rng, n, 4);
    const auto got = forward(m, x).distribution;
    const auto want = oracle::dense_gnn_forward(m, x);
    for (std::size_t c = 0; c < want.size(); ++c) CHECK(std::abs(got[c] - want[c]) <= 1e-6);
  }
}

TEST_CASE("loss values") {
  Rng rng(4);
  const auto g = five_vertex_dag();
  auto m = init_gnn(g, 4, small_hp(4));
  std::fill(m.params.begin(), m.params.end(), 0.0);
  const GraphSample s{random_features(rng, 5, 4), 2};
  CHECK(loss(m, std::span(&s, 1)) == doctest::Approx(std::log(4.0)));

  const auto lay = m.layout();
  m.params[lay.readout_bias + 2] = 800.0;
  CHECK(loss(m, std::span(&s, 1)) == doctest::Approx(0.0));
  const auto g0 = gradients(m, std::span(&s, 1));
  for (double x : g0) CHECK(std::abs(x) < 1e-12);

  const auto r = random_model(rng, g, 4, small_hp(4));
  const std::vector<GraphSample> batch{{random_features(rng, 5, 4), 0}, {random_features(rng, 5, 4), 3}};
  const double l0 = loss(r, std::span(&batch[0], 1));
  const double l1 = loss(r, std::span(&batch[1], 1));
  CHECK(loss(r, batch) == doctest::Approx((l0 + l1) / 2.0));
  CHECK(l0 == doctest::Approx(-std::log(forward(r, batch[0].features).distribution[0])));
  const std::vector<GraphSample> bad{{random_features(rng, 5, 4), 4}};
  CHECK_THROWS_AS(loss(r, bad), InvalidArgument);
}

TEST_CASE("gradients match finite differences on a 5-vertex fixture") {
  Rng rng(5);
  const auto g = five_vertex_dag();
  for (int trial = 0; trial < 5; ++trial) {
    auto m = random_model(rng, g, 4, small_hp(3));
    const std::vector<GraphSample> batch{{random_features(rng, 5, 4), 0},
                                         {random_features(rng, 5, 4, false), 2}};
    const auto analytic = gradients(m, batch);
    REQUIRE(analytic.size() == m.params.size());
    const auto check = oracle::finite_difference(m.params, analytic, [&] { return loss(m, batch); });
    CHECK(check.worst < 1e-4);
    CHECK(check.checked == m.params.size());
  }
}

TEST_CASE("duplicating a sample leaves the mean gradient unchanged") {
  Rng rng(6);
  const auto g = five_vertex_dag();
  const auto m = random_model(rng, g, 4, small_hp());
  const std::vector<GraphSample> one{{random_features(rng, 5, 4), 1}};
  const std::vector<GraphSample> two{one[0], one[0]};
  const auto a = gradients(m, one);
  const auto b = gradients(m, two);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("training separates a toy set") {
  // Linearly separable: the sign of the first feature on every vertex.
  Rng rng(7);
  const MessageGraph g({1, 2, 3}, {{1, 3}, {2, 3}});
  std::vector<GraphSample> samples;
  for (int i = 0; i < 20; ++i) {
    const int label = i % 2;
    Matrix x(3, 2);
    for (std::size_t v = 0; v < 3; ++v) {
      x(v, 0) = (label ? 1.0 : -1.0) * rng.uniform(0.5, 1.0);
      x(v, 1) = rng.uniform(-1.0, 1.0);
    }
    samples.push_back({x, label});
  }
  auto hp = small_hp(2);
  hp.epochs = 200;
  hp.lr = 0.05;
  TrainingLog log;
  const auto m = train(g, samples, hp, &log);
  for (const auto& s : samples) CHECK(forward(m, s.features).cause == s.label);
  CHECK(log.loss_history.size() == 201);
  CHECK(loss(m, samples) <= log.loss_history.front());
  CHECK(log.warnings.empty());
}

TEST_CASE("zero epochs returns the initial model; training is deterministic") {
  Rng rng(8);
  const auto g = five_vertex_dag();
  std::vector<GraphSample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back({random_features(rng, 5, 4), i % 3});
  auto hp = small_hp(3);
  CHECK(train(g, samples, hp).params == init_gnn(g, 4, hp).params);

  hp.epochs = 15;
  std::ostringstream a, b;
  save_gnn(a, train(g, samples, hp));
  save_gnn(b, train(g, samples, hp));
  CHECK(a.str() == b.str());

  TrainingLog log;
  hp.classes = 4;
  train(g, samples, hp, &log);
  CHECK(log.warnings.size() == 1);
  hp.classes = 7;
  CHECK_THROWS_AS(train(g, samples, hp), InvalidArgument);
}

TEST_CASE("checkpoint round trip and mismatch detection") {
  Rng rng(9);
  const auto g = five_vertex_dag();
  auto m = random_model(rng, g, 4, small_hp());
  m.vocab_hash = 1234;
  std::ostringstream out;
  save_gnn(out, m);
  std::istringstream in(out.str());
  const auto back = load_gnn(in, g, 1234);
  CHECK(back.params == m.params);
  CHECK(back.in_dim == 4);
  CHECK(back.hp.heads == m.hp.heads);
  std::ostringstream again;
  save_gnn(again, back);
  CHECK(again.str() == out.str());

  std::istringstream wrong_vocab(out.str());
  CHECK_THROWS_AS(load_gnn(wrong_vocab, g, 99), FormatError);
  std::istringstream wrong_graph(out.str());
  CHECK_THROWS_AS(load_gnn(wrong_graph, MessageGraph::complete(g.vertices()), 1234), FormatError);
  std::istringstream wrong_kind(out.str());
  CHECK_THROWS_AS(load_gnn(wrong_kind, g, 1234, ModelKind::FcGnn), FormatError);
  std::istringstream truncated(out.str().substr(0, out.str().size() - 3));
  CHECK_THROWS_AS(load_gnn(truncated, g, 1234), FormatError);
}

TEST_CASE("relabelling vertices leaves the output unchanged") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const auto g = random_graph(rng, n);
    const auto m = random_model(rng, g, 3, small_hp());
    const auto x = random_features(rng, n, 3);
    // Reverse the id order: vertex i gets the id of vertex n-1-i.
    std::map<DeviceId, DeviceId> rename;
    for (std::size_t i = 0; i < n; ++i) rename[g.vertices()[i]] = g.vertices()[n - 1 - i];
    std::vector<std::pair<DeviceId, DeviceId>> es;
    for (const auto& [u, v] : g.edges()) es.emplace_back(rename[u], rename[v]);
    GnnModel p = m;
    p.graph = MessageGraph(g.vertices(), es);
    Matrix px(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 3; ++j) px(n - 1 - i, j) = x(i, j);
    }
    const auto a = forward(m, x).distribution;
    const auto b = forward(p, px).distribution;
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-12));
  }
}

TEST_CASE("without edges each vertex sees only itself") {
  Rng rng(11);
  const MessageGraph g({1, 2, 3, 4}, {});
  const auto m = random_model(rng, g, 3, small_hp());
  auto x = random_features(rng, 4, 3, false);
  const auto before = trace_forward(m, x).vertex_repr;
  for (auto& v : x.row(2)) v += 0.5;
  const auto after = trace_forward(m, x).vertex_repr;
  for (std::size_t v = 0; v < 4; ++v) {
    const bool same = std::equal(before.row(v).begin(), before.row(v).end(), after.row(v).begin());
    CHECK(same == (v != 2));
  }
}

TEST_CASE("inputs are deterministic; all-zero inputs give the bias distribution") {
  Rng rng(12);
  const auto g = five_vertex_dag();
  auto m = random_model(rng, g, 4, small_hp());
  const auto x = random_features(rng, 5, 4);
  CHECK(forward(m, x).distribution == forward(m, x).distribution);
  const Matrix zero(5, 4);
  const auto lay = m.layout();
  const std::vector<double> bias(m.params.begin() + static_cast<std::ptrdiff_t>(lay.readout_bias),
                                 m.params.begin() + static_cast<std::ptrdiff_t>(lay.readout_bias + 3));
  const auto d = forward(m, zero).distribution;
  const auto expect = softmax(bias);
  for (std::size_t c = 0; c < 3; ++c) CHECK(d[c] == doctest::Approx(expect[c]).epsilon(1e-12));
  CHECK_THROWS_AS(forward(m, Matrix(4, 4)), InvalidArgument);
  CHECK_THROWS_AS(forward(m, Matrix(5, 3)), InvalidArgument);
}

TEST_CASE("softmax and argmax") {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
  CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("feature matrix follows vertex order") {
  const MessageGraph g({3, 1}, {});
  VertexFeatures f;
  f.dim = 2;
  f.rows = {{1, {1.0, 2.0}}, {3, {3.0, 4.0}}, {9, {5.0, 6.0}}};
  const auto x = feature_matrix(g, f, 2);
  CHECK(x(0, 0) == 1.0);
  CHECK(x(1, 1) == 4.0);
  CHECK_THROWS_AS(feature_matrix(g, f, 3), InvalidArgument);
  f.rows.erase(3);
  CHECK_THROWS_AS(feature_matrix(g, f, 2), InvalidArgument);
}
