#include "telops/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace telops {

namespace {

constexpr std::string_view kModelMagic = "TLOPSMDL";

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

struct HeadCache {
  Matrix z;                                // input projected by W, N x h
  std::vector<double> src, dst;            // a_src . z_u and a_dst . z_v
  std::vector<std::vector<double>> pre;    // attention scores before LeakyReLU
  std::vector<std::vector<double>> alpha;  // normalised over the neighbourhood
  Matrix m;                                // aggregated messages, N x h
};

struct LayerCache {
  Matrix input;
  std::vector<HeadCache> heads;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix vertex_repr;
  std::vector<double> readout;
  std::vector<double> logits;
  std::vector<double> probs;
};

bool row_is_zero(std::span<const double> row) {
  return std::all_of(row.begin(), row.end(), [](double x) { return x == 0.0; });
}

void check_features(const GnnModel& model, const Matrix& x) {
  if (x.rows() != model.graph.size()) {
    throw InvalidArgument("feature rows (" + std::to_string(x.rows()) +
                          ") do not match the model's vertex count (" +
                          std::to_string(model.graph.size()) + ")");
  }
  if (x.cols() != model.in_dim) {
    throw InvalidArgument("feature width " + std::to_string(x.cols()) + " but model expects " +
                          std::to_string(model.in_dim));
  }
}

void run_forward(const GnnModel& model, const GnnLayout& lay, const Matrix& x, ForwardCache& cache) {
  check_features(model, x);
  const auto& hp = model.hp;
  const std::size_t n = model.graph.size();
  const std::size_t h = hp.hidden;
  const double* p = model.params.data();
  cache.layers.assign(hp.layers, {});

  Matrix input = x;
  for (std::size_t l = 0; l < hp.layers; ++l) {
    const bool last = l + 1 == hp.layers;
    const std::size_t in = lay.in_dims[l];
    LayerCache& lc = cache.layers[l];
    lc.heads.resize(hp.heads);
    Matrix out(n, last ? h : h * hp.heads);
    for (std::size_t k = 0; k < hp.heads; ++k) {
      const double* w = p + lay.heads[l][k].weight;
      const double* a = p + lay.heads[l][k].attention;
      HeadCache& hc = lc.heads[k];
      hc.z = Matrix(n, h);
      for (std::size_t v = 0; v < n; ++v) {
        const auto xv = input.row(v);
        if (row_is_zero(xv)) continue;
        auto zv = hc.z.row(v);
        for (std::size_t i = 0; i < in; ++i) {
          const double xi = xv[i];
          if (xi == 0.0) continue;
          const double* wi = w + i * h;
          for (std::size_t j = 0; j < h; ++j) zv[j] += xi * wi[j];
        }
      }
      hc.src.assign(n, 0.0);
      hc.dst.assign(n, 0.0);
      for (std::size_t v = 0; v < n; ++v) {
        const auto zv = hc.z.row(v);
        for (std::size_t j = 0; j < h; ++j) {
          hc.src[v] += a[j] * zv[j];
          hc.dst[v] += a[h + j] * zv[j];
        }
      }
      hc.pre.resize(n);
      hc.alpha.resize(n);
      hc.m = Matrix(n, h);
      for (std::size_t v = 0; v < n; ++v) {
        const auto& nb = model.graph.neighborhood(v);
        auto& pre = hc.pre[v];
        auto& alpha = hc.alpha[v];
        pre.resize(nb.size());
        alpha.resize(nb.size());
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < nb.size(); ++t) {
          pre[t] = hc.src[nb[t]] + hc.dst[v];
          const double e = pre[t] > 0.0 ? pre[t] : hp.leaky_slope * pre[t];
          alpha[t] = e;
          top = std::max(top, e);
        }
        double total = 0.0;
        for (double& e : alpha) {
          e = std::exp(e - top);
          total += e;
        }
        auto mv = hc.m.row(v);
        for (std::size_t t = 0; t < nb.size(); ++t) {
          alpha[t] /= total;
          const auto zu = hc.z.row(nb[t]);
          for (std::size_t j = 0; j < h; ++j) mv[j] += alpha[t] * zu[j];
        }
        auto ov = out.row(v);
        for (std::size_t j = 0; j < h; ++j) {
          if (last) {
            ov[j] += elu(mv[j]) / static_cast<double>(hp.heads);
          } else {
            ov[k * h + j] = elu(mv[j]);
          }
        }
      }
    }
    lc.input = std::move(input);
    input = std::move(out);
  }

  const std::size_t c = hp.classes;
  cache.readout.assign(h, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < h; ++j) cache.readout[j] += input(v, j);
  }
  for (double& r : cache.readout) r /= static_cast<double>(n);
  cache.vertex_repr = std::move(input);
  cache.logits.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    double s = p[lay.readout_bias + k];
    for (std::size_t j = 0; j < h; ++j) s += cache.readout[j] * p[lay.readout_weight + j * c + k];
    cache.logits[k] = s;
  }
  cache.probs = softmax(cache.logits);
}

double sample_loss(const ForwardCache& cache, CauseId label) {
  const double top = *std::max_element(cache.logits.begin(), cache.logits.end());
  double total = 0.0;
  for (double z : cache.logits) total += std::exp(z - top);
  return top + std::log(total) - cache.logits[static_cast<std::size_t>(label)];
}

void run_backward(const GnnModel& model, const GnnLayout& lay, const ForwardCache& cache,
                  CauseId label, double scale, std::vector<double>& grad) {
  const auto& hp = model.hp;
  const std::size_t n = model.graph.size();
  const std::size_t h = hp.hidden;
  const std::size_t c = hp.classes;
  const double* p = model.params.data();
  double* g = grad.data();

  std::vector<double> dlogits(c);
  for (std::size_t k = 0; k < c; ++k) {
    dlogits[k] = (cache.probs[k] - (static_cast<CauseId>(k) == label ? 1.0 : 0.0)) * scale;
    g[lay.readout_bias + k] += dlogits[k];
  }
  std::vector<double> dr(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    for (std::size_t k = 0; k < c; ++k) {
      g[lay.readout_weight + j * c + k] += cache.readout[j] * dlogits[k];
      dr[j] += p[lay.readout_weight + j * c + k] * dlogits[k];
    }
  }
  Matrix d_out(n, h);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t j = 0; j < h; ++j) d_out(v, j) = dr[j] / static_cast<double>(n);
  }

  for (std::size_t l = hp.layers; l-- > 0;) {
    const bool last = l + 1 == hp.layers;
    const std::size_t in = lay.in_dims[l];
    const LayerCache& lc = cache.layers[l];
    Matrix d_in(l > 0 ? n : 0, l > 0 ? in : 0);
    for (std::size_t k = 0; k < hp.heads; ++k) {
      const auto& head = lay.heads[l][k];
      const double* w = p + head.weight;
      const double* a = p + head.attention;
      const HeadCache& hc = lc.heads[k];

      Matrix dm(n, h);
      for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t j = 0; j < h; ++j) {
          const double upstream =
              last ? d_out(v, j) / static_cast<double>(hp.heads) : d_out(v, k * h + j);
          dm(v, j) = upstream * elu_grad(hc.m(v, j));
        }
      }
      Matrix dz(n, h);
      std::vector<double> dsrc(n, 0.0), ddst(n, 0.0);
      std::vector<double> dalpha;
      for (std::size_t v = 0; v < n; ++v) {
        const auto& nb = model.graph.neighborhood(v);
        const auto& alpha = hc.alpha[v];
        const auto dmv = dm.row(v);
        dalpha.assign(nb.size(), 0.0);
        double weighted = 0.0;
        for (std::size_t t = 0; t < nb.size(); ++t) {
          const auto zu = hc.z.row(nb[t]);
          auto dzu = dz.row(nb[t]);
          double s = 0.0;
          for (std::size_t j = 0; j < h; ++j) {
            s += dmv[j] * zu[j];
            dzu[j] += alpha[t] * dmv[j];
          }
          dalpha[t] = s;
          weighted += alpha[t] * s;
        }
        for (std::size_t t = 0; t < nb.size(); ++t) {
          const double de = alpha[t] * (dalpha[t] - weighted);
          const double dpre = de * (hc.pre[v][t] > 0.0 ? 1.0 : hp.leaky_slope);
          dsrc[nb[t]] += dpre;
          ddst[v] += dpre;
        }
      }
      for (std::size_t v = 0; v < n; ++v) {
        const auto zv = hc.z.row(v);
        auto dzv = dz.row(v);
        for (std::size_t j = 0; j < h; ++j) {
          g[head.attention + j] += dsrc[v] * zv[j];
          g[head.attention + h + j] += ddst[v] * zv[j];
          dzv[j] += dsrc[v] * a[j] + ddst[v] * a[h + j];
        }
      }
      for (std::size_t v = 0; v < n; ++v) {
        const auto xv = lc.input.row(v);
        const auto dzv = dz.row(v);
        for (std::size_t i = 0; i < in; ++i) {
          const double xi = xv[i];
          if (xi == 0.0) continue;
          double* gw = g + head.weight + i * h;
          for (std::size_t j = 0; j < h; ++j) gw[j] += xi * dzv[j];
        }
        if (l > 0) {
          auto dxv = d_in.row(v);
          for (std::size_t i = 0; i < in; ++i) {
            const double* wi = w + i * h;
            double s = 0.0;
            for (std::size_t j = 0; j < h; ++j) s += dzv[j] * wi[j];
            dxv[i] += s;
          }
        }
      }
    }
    if (l > 0) d_out = std::move(d_in);
  }
}

void check_labels(const GnnModel& model, std::span<const GraphSample> batch) {
  for (const auto& s : batch) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.hp.classes) {
      throw InvalidArgument("label " + std::to_string(s.label) + " outside [0, " +
                            std::to_string(model.hp.classes) + ")");
    }
  }
}

double loss_and_gradients(const GnnModel& model, std::span<const GraphSample> batch,
                          std::vector<double>* grad) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  check_labels(model, batch);
  const GnnLayout lay = model.layout();
  if (grad) grad->assign(lay.total, 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  ForwardCache cache;
  for (const auto& s : batch) {
    run_forward(model, lay, s.features, cache);
    total += sample_loss(cache, s.label);
    if (grad) run_backward(model, lay, cache, s.label, scale, *grad);
  }
  return total * scale;
}

}  // namespace

void check_hyperparams(const GnnHyperparams& hp) {
  if (hp.layers < 1 || hp.hidden < 1 || hp.heads < 1) {
    throw InvalidArgument("GNN needs at least one layer, hidden unit and head");
  }
  if (hp.classes < 2) throw InvalidArgument("GNN needs at least two classes");
  if (!(hp.leaky_slope >= 0.0)) throw InvalidArgument("leaky_slope must be non-negative");
}

MessageGraph::MessageGraph(std::vector<DeviceId> vertices,
                           std::vector<std::pair<DeviceId, DeviceId>> edges)
    : vertices_(std::move(vertices)), edges_(std::move(edges)) {
  std::sort(vertices_.begin(), vertices_.end());
  if (std::adjacent_find(vertices_.begin(), vertices_.end()) != vertices_.end()) {
    throw InvalidArgument("message graph has duplicate vertices");
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  auto index = [&](DeviceId id) {
    auto it = std::lower_bound(vertices_.begin(), vertices_.end(), id);
    if (it == vertices_.end() || *it != id) {
      throw InvalidArgument("edge endpoint " + std::to_string(id) + " is not a vertex");
    }
    return static_cast<std::size_t>(it - vertices_.begin());
  };
  neighborhood_.resize(vertices_.size());
  for (std::size_t v = 0; v < vertices_.size(); ++v) neighborhood_[v].push_back(v);
  for (const auto& [from, to] : edges_) {
    if (from == to) continue;
    neighborhood_[index(to)].push_back(index(from));
  }
  for (auto& nb : neighborhood_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
}

MessageGraph MessageGraph::from_dag(const AssociationDag& dag) {
  std::vector<std::pair<DeviceId, DeviceId>> edges;
  for (const auto& e : dag.edges()) edges.emplace_back(e.from, e.to);
  return MessageGraph(dag.vertices(), std::move(edges));
}

MessageGraph MessageGraph::complete(std::vector<DeviceId> vertices) {
  std::sort(vertices.begin(), vertices.end());
  std::vector<std::pair<DeviceId, DeviceId>> edges;
  for (DeviceId u : vertices) {
    for (DeviceId v : vertices) {
      if (u != v) edges.emplace_back(u, v);
    }
  }
  return MessageGraph(std::move(vertices), std::move(edges));
}

std::uint64_t MessageGraph::hash() const {
  Fnv1a h;
  h.update_u64(vertices_.size());
  for (DeviceId v : vertices_) h.update_u64(static_cast<std::uint64_t>(v));
  h.update_u64(edges_.size());
  for (const auto& [u, v] : edges_) {
    h.update_u64(static_cast<std::uint64_t>(u));
    h.update_u64(static_cast<std::uint64_t>(v));
  }
  return h.digest();
}

GnnLayout GnnLayout::make(std::size_t in_dim, const GnnHyperparams& hp) {
  GnnLayout lay;
  std::size_t off = 0;
  std::size_t in = in_dim;
  for (std::size_t l = 0; l < hp.layers; ++l) {
    lay.in_dims.push_back(in);
    std::vector<Head> heads;
    for (std::size_t k = 0; k < hp.heads; ++k) {
      Head head{off, off + in * hp.hidden};
      off += in * hp.hidden + 2 * hp.hidden;
      heads.push_back(head);
    }
    lay.heads.push_back(std::move(heads));
    in = hp.hidden * hp.heads;
  }
  lay.readout_weight = off;
  off += hp.hidden * hp.classes;
  lay.readout_bias = off;
  off += hp.classes;
  lay.total = off;
  return lay;
}

Matrix feature_matrix(const MessageGraph& graph, const VertexFeatures& features,
                      std::size_t expected_dim) {
  if (features.dim != expected_dim) {
    throw InvalidArgument("feature width " + std::to_string(features.dim) + " but expected " +
                          std::to_string(expected_dim));
  }
  Matrix x(graph.size(), expected_dim);
  for (std::size_t v = 0; v < graph.size(); ++v) {
    auto it = features.rows.find(graph.vertices()[v]);
    if (it == features.rows.end()) {
      throw InvalidArgument("features lack vertex " + std::to_string(graph.vertices()[v]));
    }
    if (it->second.size() != expected_dim) throw InvalidArgument("ragged feature row");
    std::copy(it->second.begin(), it->second.end(), x.row(v).begin());
  }
  return x;
}

GnnModel init_gnn(const MessageGraph& graph, std::size_t in_dim, const GnnHyperparams& hp) {
  check_hyperparams(hp);
  if (in_dim == 0) throw InvalidArgument("GNN input width must be positive");
  if (graph.size() == 0) throw InvalidArgument("GNN needs at least one vertex");
  GnnModel model;
  model.hp = hp;
  model.in_dim = in_dim;
  model.graph = graph;
  const GnnLayout lay = model.layout();
  model.params.assign(lay.total, 0.0);
  Rng rng(derive_seed(hp.seed, "gnn-init"));
  auto glorot = [&](std::size_t offset, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) {
      model.params[offset + i] = rng.uniform(-limit, limit);
    }
  };
  for (std::size_t l = 0; l < hp.layers; ++l) {
    for (const auto& head : lay.heads[l]) {
      glorot(head.weight, lay.in_dims[l], hp.hidden);
      glorot(head.attention, 2 * hp.hidden, 1);
    }
  }
  glorot(lay.readout_weight, hp.hidden, hp.classes);
  return model;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& z : out) {
    z = std::exp(z - top);
    total += z;
  }
  for (double& z : out) z /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Diagnosis forward(const GnnModel& model, const Matrix& features) {
  ForwardCache cache;
  run_forward(model, model.layout(), features, cache);
  return {static_cast<CauseId>(argmax(cache.probs)), std::move(cache.probs)};
}

Diagnosis forward(const GnnModel& model, const VertexFeatures& features) {
  return forward(model, feature_matrix(model.graph, features, model.in_dim));
}

AttentionTrace trace_forward(const GnnModel& model, const Matrix& features) {
  ForwardCache cache;
  run_forward(model, model.layout(), features, cache);
  AttentionTrace tr;
  for (const auto& lc : cache.layers) {
    auto& per_layer = tr.alpha.emplace_back();
    for (const auto& hc : lc.heads) {
      auto& per_head = per_layer.emplace_back();
      for (std::size_t v = 0; v < model.graph.size(); ++v) {
        auto& row = per_head.emplace_back();
        const auto& nb = model.graph.neighborhood(v);
        for (std::size_t t = 0; t < nb.size(); ++t) row.emplace_back(nb[t], hc.alpha[v][t]);
      }
    }
  }
  tr.vertex_repr = std::move(cache.vertex_repr);
  tr.logits = std::move(cache.logits);
  tr.distribution = std::move(cache.probs);
  return tr;
}

double loss(const GnnModel& model, std::span<const GraphSample> batch) {
  return loss_and_gradients(model, batch, nullptr);
}

std::vector<double> gradients(const GnnModel& model, std::span<const GraphSample> batch) {
  std::vector<double> grad;
  loss_and_gradients(model, batch, &grad);
  return grad;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, std::span<const double> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

GnnModel train(const MessageGraph& graph, std::span<const GraphSample> samples,
               const GnnHyperparams& hp, TrainingLog* log) {
  check_hyperparams(hp);
  if (samples.size() < hp.classes) {
    throw InvalidArgument("need at least as many samples as classes");
  }
  GnnModel model = init_gnn(graph, samples.front().features.cols(), hp);
  check_labels(model, samples);
  TrainingLog local;
  TrainingLog& out = log ? *log : local;
  out = {};
  std::set<CauseId> seen;
  for (const auto& s : samples) seen.insert(s.label);
  for (std::size_t k = 0; k < hp.classes; ++k) {
    if (!seen.contains(static_cast<CauseId>(k))) {
      out.warnings.push_back("class " + std::to_string(k) + " absent from the training set");
    }
  }

  Adam opt(model.params.size(), hp.lr);
  std::vector<double> grad;
  std::vector<double> best = model.params;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    const double l = loss_and_gradients(model, samples, &grad);
    out.loss_history.push_back(l);
    if (l < best_loss) {
      best_loss = l;
      best = model.params;
    }
    opt.step(model.params, grad);
  }
  const double final_loss = loss(model, samples);
  out.loss_history.push_back(final_loss);
  if (!(final_loss < best_loss)) model.params = std::move(best);
  return model;
}

GnnModel train(const AssociationDag& dag, std::span<const GraphSample> samples,
               const GnnHyperparams& hp, TrainingLog* log) {
  return train(MessageGraph::from_dag(dag), samples, hp, log);
}

Diagnosis diagnose(const GnnModel& model, const DiagnosisSample& sample,
                   const EmbeddingMatrix& emb, const Vocabulary& vocab, const FeatureCaps& caps) {
  if (model.vocab_hash != 0 && model.vocab_hash != vocab.hash()) {
    throw InvalidArgument("model was trained against a different vocabulary");
  }
  const VertexFeatures f = vertex_features(sample, emb, vocab, model.graph.vertices(), caps);
  return forward(model, f);
}

void save_gnn(std::ostream& os, const GnnModel& model, ModelKind kind) {
  binio::write_magic(os, kModelMagic);
  binio::write_u64(os, static_cast<std::uint64_t>(kind));
  binio::write_u64(os, model.hp.layers);
  binio::write_u64(os, model.hp.hidden);
  binio::write_u64(os, model.hp.heads);
  binio::write_u64(os, model.hp.classes);
  binio::write_u64(os, model.in_dim);
  binio::write_f64(os, model.hp.leaky_slope);
  binio::write_u64(os, model.graph.hash());
  binio::write_u64(os, model.vocab_hash);
  binio::write_u64(os, model.params.size());
  binio::write_f64s(os, model.params);
}

GnnModel load_gnn(std::istream& is, const MessageGraph& graph, std::uint64_t vocab_hash,
                  ModelKind kind) {
  binio::expect_magic(is, kModelMagic);
  if (binio::read_u64(is) != static_cast<std::uint64_t>(kind)) {
    throw FormatError("checkpoint holds a different model kind");
  }
  GnnModel model;
  model.hp.layers = binio::read_u64(is);
  model.hp.hidden = binio::read_u64(is);
  model.hp.heads = binio::read_u64(is);
  model.hp.classes = binio::read_u64(is);
  model.in_dim = binio::read_u64(is);
  model.hp.leaky_slope = binio::read_f64(is);
  if (binio::read_u64(is) != graph.hash()) throw FormatError("checkpoint: graph hash mismatch");
  model.vocab_hash = binio::read_u64(is);
  if (model.vocab_hash != vocab_hash) throw FormatError("checkpoint: vocabulary hash mismatch");
  try {
    check_hyperparams(model.hp);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  model.graph = graph;
  const std::size_t n = binio::read_u64(is);
  if (n != model.layout().total) throw FormatError("checkpoint: parameter count mismatch");
  model.params = binio::read_f64s(is, n);
  return model;
}

}  // namespace telops
