#include "telops/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace telops {

namespace {

constexpr std::string_view kModelMagic = "TLOPSMDL";

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

double clip01(double x) { return std::clamp(x, 0.0, 1.0); }

void expect_kind(std::istream& is, ModelKind kind) {
  binio::expect_magic(is, kModelMagic);
  if (binio::read_u64(is) != static_cast<std::uint64_t>(kind)) {
    throw FormatError("checkpoint holds a different model kind");
  }
}

template <typename Sample>
void check_training_set(std::span<const Sample> samples, std::size_t classes,
                        TrainingLog& log) {
  if (samples.size() < classes) throw InvalidArgument("need at least as many samples as classes");
  std::set<CauseId> seen;
  for (const auto& s : samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes) {
      throw InvalidArgument("label " + std::to_string(s.label) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
    seen.insert(s.label);
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (!seen.contains(static_cast<CauseId>(k))) {
      log.warnings.push_back("class " + std::to_string(k) + " absent from the training set");
    }
  }
}

// ---- MLP internals ----

struct MlpCache {
  std::vector<double> z1, a1, z2, a2, logits, probs;
};

void mlp_forward(const MlpModel& m, const MlpLayout& lay, std::span<const double> x, MlpCache& c) {
  if (x.size() != m.in_dim) {
    throw InvalidArgument("MLP input width " + std::to_string(x.size()) + " but model expects " +
                          std::to_string(m.in_dim));
  }
  const double* p = m.params.data();
  const std::size_t h1 = m.hp.hidden1, h2 = m.hp.hidden2, nc = m.hp.classes;
  c.z1.assign(p + lay.b1, p + lay.b1 + h1);
  for (std::size_t i = 0; i < m.in_dim; ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t j = 0; j < h1; ++j) c.z1[j] += x[i] * p[lay.w1 + i * h1 + j];
  }
  c.a1.resize(h1);
  for (std::size_t j = 0; j < h1; ++j) c.a1[j] = elu(c.z1[j]);
  c.z2.assign(p + lay.b2, p + lay.b2 + h2);
  for (std::size_t i = 0; i < h1; ++i) {
    for (std::size_t j = 0; j < h2; ++j) c.z2[j] += c.a1[i] * p[lay.w2 + i * h2 + j];
  }
  c.a2.resize(h2);
  for (std::size_t j = 0; j < h2; ++j) c.a2[j] = elu(c.z2[j]);
  c.logits.assign(p + lay.b3, p + lay.b3 + nc);
  for (std::size_t i = 0; i < h2; ++i) {
    for (std::size_t j = 0; j < nc; ++j) c.logits[j] += c.a2[i] * p[lay.w3 + i * nc + j];
  }
  c.probs = softmax(c.logits);
}

double mlp_loss_and_gradients(const MlpModel& m, std::span<const MlpSample> batch,
                              std::vector<double>* grad) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const MlpLayout lay = m.layout();
  const std::size_t h1 = m.hp.hidden1, h2 = m.hp.hidden2, nc = m.hp.classes;
  if (grad) grad->assign(lay.total, 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const double* p = m.params.data();
  MlpCache c;
  double total = 0.0;
  std::vector<double> dlog(nc), da2(h2), dz2(h2), da1(h1), dz1(h1);
  for (const auto& s : batch) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= nc) {
      throw InvalidArgument("label " + std::to_string(s.label) + " out of range");
    }
    mlp_forward(m, lay, s.input, c);
    const double top = *std::max_element(c.logits.begin(), c.logits.end());
    double z = 0.0;
    for (double l : c.logits) z += std::exp(l - top);
    total += top + std::log(z) - c.logits[static_cast<std::size_t>(s.label)];
    if (!grad) continue;
    double* g = grad->data();
    for (std::size_t k = 0; k < nc; ++k) {
      dlog[k] = (c.probs[k] - (static_cast<CauseId>(k) == s.label ? 1.0 : 0.0)) * scale;
      g[lay.b3 + k] += dlog[k];
    }
    for (std::size_t i = 0; i < h2; ++i) {
      double s2 = 0.0;
      for (std::size_t k = 0; k < nc; ++k) {
        g[lay.w3 + i * nc + k] += c.a2[i] * dlog[k];
        s2 += p[lay.w3 + i * nc + k] * dlog[k];
      }
      dz2[i] = s2 * elu_grad(c.z2[i]);
      g[lay.b2 + i] += dz2[i];
    }
    for (std::size_t i = 0; i < h1; ++i) {
      double s1 = 0.0;
      for (std::size_t j = 0; j < h2; ++j) {
        g[lay.w2 + i * h2 + j] += c.a1[i] * dz2[j];
        s1 += p[lay.w2 + i * h2 + j] * dz2[j];
      }
      dz1[i] = s1 * elu_grad(c.z1[i]);
      g[lay.b1 + i] += dz1[i];
    }
    for (std::size_t i = 0; i < m.in_dim; ++i) {
      if (s.input[i] == 0.0) continue;
      for (std::size_t j = 0; j < h1; ++j) g[lay.w1 + i * h1 + j] += s.input[i] * dz1[j];
    }
  }
  return total * scale;
}

// ---- forest internals ----

std::size_t majority(std::span<const double> dist) { return argmax(dist); }

DecisionTree grow_tree(std::span<const ForestSample> rows, std::vector<std::size_t> idx,
                       const ForestParams& params, std::size_t n_features, Rng& rng) {
  const std::size_t nc = params.classes;
  const std::size_t m = params.features_per_split == 0
                            ? std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                                           std::sqrt(static_cast<double>(n_features)))))
                            : std::min(params.features_per_split, n_features);
  DecisionTree tree;
  struct Pending {
    std::size_t node;
    std::vector<std::size_t> idx;
    std::size_t depth;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::move(idx), 0});
  std::vector<std::size_t> all_features(n_features);
  std::iota(all_features.begin(), all_features.end(), 0);
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    std::vector<std::size_t> counts(nc, 0);
    for (std::size_t i : cur.idx) ++counts[static_cast<std::size_t>(rows[i].label)];
    {
      auto& dist = tree.nodes[cur.node].distribution;
      dist.resize(nc);
      for (std::size_t k = 0; k < nc; ++k) {
        dist[k] = static_cast<double>(counts[k]) / static_cast<double>(cur.idx.size());
      }
    }
    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    if (pure || cur.depth >= params.max_depth || cur.idx.size() < params.min_samples_split) continue;

    for (std::size_t i = 0; i < m; ++i) {
      std::swap(all_features[i], all_features[i + rng.below(n_features - i)]);
    }
    std::vector<std::size_t> chosen(all_features.begin(), all_features.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(chosen.begin(), chosen.end());
    const auto split = best_split(rows, cur.idx, chosen, nc);
    if (!split) continue;
    double sumsq = 0.0;
    for (std::size_t c : counts) sumsq += static_cast<double>(c * c);
    const double parent = sumsq / static_cast<double>(cur.idx.size());
    if (!(split->score > parent * (1.0 + 1e-12))) continue;

    std::vector<std::size_t> left, right;
    for (std::size_t i : cur.idx) {
      (rows[i].input[split->feature] <= split->threshold ? left : right).push_back(i);
    }
    const std::size_t l = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[cur.node];
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.left = l;
    node.right = l + 1;
    stack.push_back({l + 1, std::move(right), cur.depth + 1});
    stack.push_back({l, std::move(left), cur.depth + 1});
  }
  return tree;
}

}  // namespace

// ---- fc-GNN ----

FcGnnModel train_fc_gnn(std::vector<DeviceId> vertices, std::span<const GraphSample> samples,
                        const GnnHyperparams& hp, TrainingLog* log) {
  return {train(MessageGraph::complete(std::move(vertices)), samples, hp, log)};
}

Diagnosis forward(const FcGnnModel& model, const Matrix& features) {
  return forward(model.inner, features);
}

void save_fc_gnn(std::ostream& os, const FcGnnModel& model) {
  save_gnn(os, model.inner, ModelKind::FcGnn);
}

FcGnnModel load_fc_gnn(std::istream& is, std::vector<DeviceId> vertices, std::uint64_t vocab_hash) {
  return {load_gnn(is, MessageGraph::complete(std::move(vertices)), vocab_hash, ModelKind::FcGnn)};
}

// ---- MLP ----

void check_hyperparams(const MlpHyperparams& hp) {
  if (hp.hidden1 < 1 || hp.hidden2 < 1) throw InvalidArgument("MLP hidden widths must be positive");
  if (hp.classes < 2) throw InvalidArgument("MLP needs at least two classes");
}

MlpLayout MlpLayout::make(std::size_t in_dim, const MlpHyperparams& hp) {
  MlpLayout l;
  std::size_t off = 0;
  l.w1 = off;
  off += in_dim * hp.hidden1;
  l.b1 = off;
  off += hp.hidden1;
  l.w2 = off;
  off += hp.hidden1 * hp.hidden2;
  l.b2 = off;
  off += hp.hidden2;
  l.w3 = off;
  off += hp.hidden2 * hp.classes;
  l.b3 = off;
  off += hp.classes;
  l.total = off;
  return l;
}

std::vector<double> global_features(const DiagnosisSample& sample) {
  int max_sev = 0;
  std::set<std::string_view> names;
  std::set<DeviceId> devices;
  for (const auto& r : sample.records) {
    max_sev = std::max(max_sev, static_cast<int>(r.severity));
    names.insert(r.alarm_name);
    if (r.device_id) devices.insert(*r.device_id);
  }
  return {clip01(static_cast<double>(sample.records.size()) / 64.0),
          static_cast<double>(max_sev) / kMaxSeverityRank,
          clip01(static_cast<double>(names.size()) / 16.0),
          clip01(static_cast<double>(devices.size()) / 16.0)};
}

std::vector<double> pooled_features(const Matrix& vertex_features, const DiagnosisSample& sample) {
  std::vector<double> out(vertex_features.cols(), 0.0);
  for (std::size_t v = 0; v < vertex_features.rows(); ++v) {
    const auto row = vertex_features.row(v);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += row[j];
  }
  if (vertex_features.rows() > 0) {
    for (double& x : out) x /= static_cast<double>(vertex_features.rows());
  }
  const auto g = global_features(sample);
  out.insert(out.end(), g.begin(), g.end());
  return out;
}

MlpModel init_mlp(std::size_t in_dim, const MlpHyperparams& hp) {
  check_hyperparams(hp);
  if (in_dim == 0) throw InvalidArgument("MLP input width must be positive");
  MlpModel m;
  m.hp = hp;
  m.in_dim = in_dim;
  const MlpLayout lay = m.layout();
  m.params.assign(lay.total, 0.0);
  Rng rng(derive_seed(hp.seed, "mlp-init"));
  auto glorot = [&](std::size_t off, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) m.params[off + i] = rng.uniform(-limit, limit);
  };
  glorot(lay.w1, in_dim, hp.hidden1);
  glorot(lay.w2, hp.hidden1, hp.hidden2);
  glorot(lay.w3, hp.hidden2, hp.classes);
  return m;
}

Diagnosis forward(const MlpModel& model, std::span<const double> input) {
  MlpCache c;
  mlp_forward(model, model.layout(), input, c);
  return {static_cast<CauseId>(argmax(c.probs)), std::move(c.probs)};
}

double loss(const MlpModel& model, std::span<const MlpSample> batch) {
  return mlp_loss_and_gradients(model, batch, nullptr);
}

std::vector<double> gradients(const MlpModel& model, std::span<const MlpSample> batch) {
  std::vector<double> g;
  mlp_loss_and_gradients(model, batch, &g);
  return g;
}

MlpModel train_mlp(std::span<const MlpSample> samples, const MlpHyperparams& hp, TrainingLog* log) {
  check_hyperparams(hp);
  TrainingLog local;
  TrainingLog& out = log ? *log : local;
  out = {};
  check_training_set(samples, hp.classes, out);
  MlpModel m = init_mlp(samples.front().input.size(), hp);
  Adam opt(m.params.size(), hp.lr);
  std::vector<double> grad;
  std::vector<double> best = m.params;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    const double l = mlp_loss_and_gradients(m, samples, &grad);
    out.loss_history.push_back(l);
    if (l < best_loss) {
      best_loss = l;
      best = m.params;
    }
    opt.step(m.params, grad);
  }
  const double final_loss = loss(m, samples);
  out.loss_history.push_back(final_loss);
  if (!(final_loss < best_loss)) m.params = std::move(best);
  return m;
}

void save_mlp(std::ostream& os, const MlpModel& model) {
  binio::write_magic(os, kModelMagic);
  binio::write_u64(os, static_cast<std::uint64_t>(ModelKind::Mlp));
  binio::write_u64(os, model.hp.hidden1);
  binio::write_u64(os, model.hp.hidden2);
  binio::write_u64(os, model.hp.classes);
  binio::write_u64(os, model.in_dim);
  binio::write_u64(os, model.vocab_hash);
  binio::write_u64(os, model.params.size());
  binio::write_f64s(os, model.params);
}

MlpModel load_mlp(std::istream& is, std::uint64_t vocab_hash) {
  expect_kind(is, ModelKind::Mlp);
  MlpModel m;
  m.hp.hidden1 = binio::read_u64(is);
  m.hp.hidden2 = binio::read_u64(is);
  m.hp.classes = binio::read_u64(is);
  m.in_dim = binio::read_u64(is);
  m.vocab_hash = binio::read_u64(is);
  if (m.vocab_hash != vocab_hash) throw FormatError("checkpoint: vocabulary hash mismatch");
  try {
    check_hyperparams(m.hp);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const std::size_t n = binio::read_u64(is);
  if (n != m.layout().total) throw FormatError("checkpoint: parameter count mismatch");
  m.params = binio::read_f64s(is, n);
  return m;
}

// ---- forest ----

std::vector<double> forest_features(const DiagnosisSample& sample, const FaultCatalog& catalog) {
  std::vector<std::set<std::string, std::less<>>> names(catalog.size());
  for (const auto& [key, templates] : catalog.alarm_templates) {
    if (key.first < 0 || static_cast<std::size_t>(key.first) >= catalog.size()) continue;
    names[static_cast<std::size_t>(key.first)].insert(templates.begin(), templates.end());
  }
  std::vector<double> out(catalog.size(), 0.0);
  int max_sev = 0;
  std::set<std::string_view> distinct;
  std::set<DeviceId> devices;
  for (const auto& r : sample.records) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (names[c].contains(r.alarm_name)) out[c] += 1.0;
    }
    max_sev = std::max(max_sev, static_cast<int>(r.severity));
    distinct.insert(r.alarm_name);
    if (r.device_id) devices.insert(*r.device_id);
  }
  out.push_back(static_cast<double>(sample.records.size()));
  out.push_back(static_cast<double>(max_sev));
  out.push_back(static_cast<double>(distinct.size()));
  out.push_back(static_cast<double>(devices.size()));
  return out;
}

std::optional<Split> best_split(std::span<const ForestSample> rows, std::span<const std::size_t> idx,
                                std::span<const std::size_t> features, std::size_t classes) {
  std::optional<Split> best;
  const std::size_t n = idx.size();
  if (n < 2) return best;
  std::vector<std::size_t> total(classes, 0);
  for (std::size_t i : idx) ++total[static_cast<std::size_t>(rows[i].label)];
  std::vector<std::size_t> sorted_features(features.begin(), features.end());
  std::sort(sorted_features.begin(), sorted_features.end());
  std::vector<std::pair<double, std::size_t>> column(n);
  std::vector<std::size_t> left(classes);
  for (std::size_t f : sorted_features) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto& row = rows[idx[k]];
      column[k] = {row.input.at(f), static_cast<std::size_t>(row.label)};
    }
    std::sort(column.begin(), column.end());
    std::fill(left.begin(), left.end(), 0);
    std::size_t sq_left = 0;
    std::size_t sq_right = 0;
    for (std::size_t c : total) sq_right += c * c;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const std::size_t c = column[k].second;
      const std::size_t right_c = total[c] - left[c];
      sq_left += 2 * left[c] + 1;
      sq_right -= 2 * right_c - 1;
      ++left[c];
      const double a = column[k].first;
      const double b = column[k + 1].first;
      if (!(a < b)) continue;
      const double nl = static_cast<double>(k + 1);
      const double nr = static_cast<double>(n - k - 1);
      const double score = static_cast<double>(sq_left) / nl + static_cast<double>(sq_right) / nr;
      if (!best || score > best->score) {
        double mid = a / 2.0 + b / 2.0;
        if (!(mid < b)) mid = a;
        best = Split{f, mid, score};
      }
    }
  }
  return best;
}

const std::vector<double>& DecisionTree::leaf(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature != TreeNode::kLeaf) {
    i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  return nodes[i].distribution;
}

ForestModel train_forest(std::span<const ForestSample> samples, const ForestParams& params) {
  if (samples.empty()) throw InvalidArgument("cannot train a forest on an empty set");
  if (params.trees == 0) throw InvalidArgument("forest needs at least one tree");
  if (params.classes < 2) throw InvalidArgument("forest needs at least two classes");
  ForestModel model;
  model.params = params;
  model.n_features = samples.front().input.size();
  for (const auto& s : samples) {
    if (s.input.size() != model.n_features) throw InvalidArgument("ragged forest inputs");
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= params.classes) {
      throw InvalidArgument("label " + std::to_string(s.label) + " out of range");
    }
  }
  if (model.n_features == 0) throw InvalidArgument("forest inputs are empty");
  for (std::size_t t = 0; t < params.trees; ++t) {
    Rng rng(derive_seed(derive_seed(params.seed, "forest"), static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> idx(samples.size());
    if (params.bootstrap) {
      for (auto& i : idx) i = rng.below(samples.size());
    } else {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    }
    model.trees.push_back(grow_tree(samples, std::move(idx), params, model.n_features, rng));
  }
  return model;
}

Diagnosis forward(const ForestModel& model, std::span<const double> input) {
  if (input.size() != model.n_features) throw InvalidArgument("forest input width mismatch");
  std::vector<double> votes(model.params.classes, 0.0);
  for (const auto& tree : model.trees) votes[majority(tree.leaf(input))] += 1.0;
  for (double& v : votes) v /= static_cast<double>(model.trees.size());
  return {static_cast<CauseId>(argmax(votes)), std::move(votes)};
}

void save_forest(std::ostream& os, const ForestModel& model) {
  binio::write_magic(os, kModelMagic);
  binio::write_u64(os, static_cast<std::uint64_t>(ModelKind::Forest));
  const auto& p = model.params;
  for (std::uint64_t v : {p.trees, p.max_depth, p.features_per_split, p.min_samples_split,
                          std::uint64_t{p.bootstrap}, p.seed, p.classes, model.n_features}) {
    binio::write_u64(os, v);
  }
  for (const auto& tree : model.trees) {
    binio::write_u64(os, tree.nodes.size());
    for (const auto& node : tree.nodes) {
      binio::write_u64(os, node.feature);
      binio::write_f64(os, node.threshold);
      binio::write_u64(os, node.left);
      binio::write_u64(os, node.right);
      binio::write_f64s(os, node.distribution);
    }
  }
}

ForestModel load_forest(std::istream& is) {
  expect_kind(is, ModelKind::Forest);
  ForestModel m;
  auto& p = m.params;
  p.trees = binio::read_u64(is);
  p.max_depth = binio::read_u64(is);
  p.features_per_split = binio::read_u64(is);
  p.min_samples_split = binio::read_u64(is);
  const std::uint64_t bootstrap = binio::read_u64(is);
  if (bootstrap > 1) throw FormatError("checkpoint: bad bootstrap flag");
  p.bootstrap = bootstrap == 1;
  p.seed = binio::read_u64(is);
  p.classes = binio::read_u64(is);
  m.n_features = binio::read_u64(is);
  if (p.classes < 2 || p.classes > 1'000'000) throw FormatError("checkpoint: bad class count");
  for (std::size_t t = 0; t < p.trees; ++t) {
    DecisionTree tree;
    const std::size_t n = binio::read_u64(is);
    if (n == 0 || n > 100'000'000) throw FormatError("checkpoint: bad node count");
    tree.nodes.resize(n);
    for (auto& node : tree.nodes) {
      node.feature = binio::read_u64(is);
      node.threshold = binio::read_f64(is);
      node.left = binio::read_u64(is);
      node.right = binio::read_u64(is);
      node.distribution = binio::read_f64s(is, p.classes);
      if (node.feature != TreeNode::kLeaf &&
          (node.feature >= m.n_features || node.left >= n || node.right >= n)) {
        throw FormatError("checkpoint: malformed tree node");
      }
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace telops
