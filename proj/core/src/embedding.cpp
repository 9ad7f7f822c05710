#include "telops/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "json.hpp"

namespace telops {

using nlohmann::json;

namespace {

constexpr std::string_view kEmbeddingMagic = "TLOPSEMB";

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log s(x), stable for large |x|.
double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void check_index(const EmbeddingMatrix& emb, int i) {
  if (i < 0 || static_cast<std::size_t>(i) >= emb.vocab_size) {
    throw InvalidArgument("token index " + std::to_string(i) + " outside the vocabulary");
  }
}

// Row gradients of one (center, context, negatives) term, all evaluated at
// the current parameters.
struct RowGrads {
  std::vector<double> center;                          // d L / d v_c
  std::vector<std::pair<int, std::vector<double>>> out;  // d L / d u_k
};

RowGrads row_gradients(const EmbeddingMatrix& emb, int c, int o, std::span<const int> negatives) {
  const auto vc = emb.in_row(c);
  RowGrads g;
  g.center.assign(emb.dim, 0.0);
  auto term = [&](int k, double coeff) {
    const auto uk = emb.out_row(k);
    std::vector<double> gu(emb.dim);
    for (std::size_t i = 0; i < emb.dim; ++i) {
      g.center[i] += coeff * uk[i];
      gu[i] = coeff * vc[i];
    }
    g.out.emplace_back(k, std::move(gu));
  };
  term(o, sigmoid(dot(emb.out_row(o), vc)) - 1.0);
  for (int n : negatives) term(n, sigmoid(dot(emb.out_row(n), vc)));
  return g;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view alarm_name) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : alarm_name) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_[0] != kUnkToken) {
    throw InvalidArgument("vocabulary must start with the UNK token");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw InvalidArgument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view alarm_name) const {
  std::vector<int> out;
  for (const auto& t : tokenize(alarm_name)) out.push_back(index_of(t));
  return out;
}

std::uint64_t Vocabulary::hash() const {
  Fnv1a h;
  h.update_u64(tokens_.size());
  for (const auto& t : tokens_) h.update(t);
  return h.digest();
}

Vocabulary build_vocab(std::span<const AlarmLog> logs, std::size_t min_count) {
  std::map<std::string, std::size_t> freq;
  for (const auto& log : logs) {
    for (const auto& r : log.records()) {
      for (auto& t : tokenize(r.alarm_name)) freq[std::move(t)]++;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, n] : freq) {
    if (n >= std::max<std::size_t>(min_count, 1) && t != Vocabulary::kUnkToken) kept.emplace_back(t, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  std::vector<std::string> tokens{std::string(Vocabulary::kUnkToken)};
  for (auto& [t, n] : kept) tokens.push_back(std::move(t));
  return Vocabulary(std::move(tokens));
}

std::string vocab_to_json(const Vocabulary& vocab) {
  json doc;
  doc["tokens"] = vocab.tokens();
  return doc.dump(2) + "\n";
}

Vocabulary vocab_from_json(std::string_view text) {
  try {
    return Vocabulary(json::parse(text).at("tokens").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("vocabulary file: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("vocabulary file: ") + e.what());
  }
}

std::vector<std::vector<int>> skipgram_corpus(const std::vector<DiagnosisSample>& samples,
                                              const Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  for (const auto& s : samples) {
    std::vector<const AlarmRecord*> recs;
    for (const auto& r : s.records) {
      if (r.device_id) recs.push_back(&r);
    }
    std::stable_sort(recs.begin(), recs.end(), [](const AlarmRecord* x, const AlarmRecord* y) {
      if (*x->device_id != *y->device_id) return *x->device_id < *y->device_id;
      if (x->timestamp != y->timestamp) return x->timestamp < y->timestamp;
      return x->record_id < y->record_id;
    });
    std::vector<int> seq;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      for (int t : vocab.encode(recs[i]->alarm_name)) seq.push_back(t);
      if (i + 1 == recs.size() || *recs[i + 1]->device_id != *recs[i]->device_id) {
        if (!seq.empty()) out.push_back(std::move(seq));
        seq.clear();
      }
    }
  }
  return out;
}

EmbeddingMatrix init_embedding(std::size_t vocab_size, const SkipGramParams& params) {
  if (params.dim < 2) throw InvalidArgument("embedding dimension must be >= 2");
  EmbeddingMatrix emb(vocab_size, params.dim);
  Rng rng(derive_seed(params.seed, "skipgram-init"));
  const double scale = 0.5 / static_cast<double>(params.dim);
  for (auto& x : emb.input) x = rng.uniform(-scale, scale);
  return emb;
}

EmbeddingMatrix train_skipgram(const std::vector<std::vector<int>>& sequences,
                               std::size_t vocab_size, const SkipGramParams& params) {
  if (sequences.empty()) throw InvalidArgument("train_skipgram: no sequences");
  if (params.negatives < 1) throw InvalidArgument("train_skipgram: need at least one negative");
  EmbeddingMatrix emb = init_embedding(vocab_size, params);

  std::vector<double> weight(vocab_size, 0.0);
  for (const auto& seq : sequences) {
    for (int t : seq) {
      check_index(emb, t);
      weight[static_cast<std::size_t>(t)] += 1.0;
    }
  }
  std::vector<double> cumulative(vocab_size, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    total += std::pow(weight[i], 0.75);
    cumulative[i] = total;
  }
  if (params.lr == 0.0 || total == 0.0) return emb;

  Rng rng(derive_seed(params.seed, "skipgram-negatives"));
  auto draw = [&]() {
    const double x = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
    return static_cast<int>(std::min<std::size_t>(it - cumulative.begin(), vocab_size - 1));
  };
  const auto window = static_cast<std::ptrdiff_t>(params.window);
  std::vector<int> negs;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    for (const auto& seq : sequences) {
      const auto n = static_cast<std::ptrdiff_t>(seq.size());
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - window);
             j <= std::min(n - 1, i + window); ++j) {
          if (j == i) continue;
          const int c = seq[static_cast<std::size_t>(i)];
          const int o = seq[static_cast<std::size_t>(j)];
          negs.clear();
          for (std::size_t k = 0; k < params.negatives; ++k) {
            const int neg = draw();
            if (neg != o) negs.push_back(neg);
          }
          const RowGrads g = row_gradients(emb, c, o, negs);
          auto vc = emb.in_row(c);
          for (std::size_t d = 0; d < emb.dim; ++d) vc[d] -= params.lr * g.center[d];
          for (const auto& [k, gu] : g.out) {
            auto uk = emb.out_row(k);
            for (std::size_t d = 0; d < emb.dim; ++d) uk[d] -= params.lr * gu[d];
          }
        }
      }
    }
  }
  return emb;
}

double skipgram_loss(const EmbeddingMatrix& emb, int center, int context,
                     std::span<const int> negatives) {
  check_index(emb, center);
  check_index(emb, context);
  const auto vc = emb.in_row(center);
  double loss = -log_sigmoid(dot(emb.out_row(context), vc));
  for (int n : negatives) {
    check_index(emb, n);
    loss -= log_sigmoid(-dot(emb.out_row(n), vc));
  }
  return loss;
}

EmbeddingMatrix skipgram_gradient(const EmbeddingMatrix& emb, int center, int context,
                                  std::span<const int> negatives) {
  check_index(emb, center);
  check_index(emb, context);
  for (int n : negatives) check_index(emb, n);
  EmbeddingMatrix grad(emb.vocab_size, emb.dim);
  const RowGrads g = row_gradients(emb, center, context, negatives);
  auto gc = grad.in_row(center);
  for (std::size_t d = 0; d < emb.dim; ++d) gc[d] += g.center[d];
  for (const auto& [k, gu] : g.out) {
    auto row = grad.out_row(k);
    for (std::size_t d = 0; d < emb.dim; ++d) row[d] += gu[d];
  }
  return grad;
}

double cosine(std::span<const double> x, std::span<const double> y) {
  const double nx = std::sqrt(dot(x, x));
  const double ny = std::sqrt(dot(y, y));
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return dot(x, y) / (nx * ny);
}

void save_embedding(std::ostream& os, const EmbeddingMatrix& emb, std::uint64_t vocab_hash) {
  binio::write_magic(os, kEmbeddingMagic);
  binio::write_u64(os, emb.vocab_size);
  binio::write_u64(os, emb.dim);
  binio::write_u64(os, vocab_hash);
  binio::write_f64s(os, emb.input);
  binio::write_f64s(os, emb.output);
}

EmbeddingMatrix load_embedding(std::istream& is, std::uint64_t expected_vocab_hash) {
  binio::expect_magic(is, kEmbeddingMagic);
  const auto v = binio::read_u64(is);
  const auto d = binio::read_u64(is);
  const auto hash = binio::read_u64(is);
  if (hash != expected_vocab_hash) throw FormatError("embedding checkpoint: vocabulary hash mismatch");
  if (v > (1u << 24) || d > (1u << 16)) throw FormatError("embedding checkpoint: implausible shape");
  EmbeddingMatrix emb;
  emb.vocab_size = v;
  emb.dim = d;
  emb.input = binio::read_f64s(is, v * d);
  emb.output = binio::read_f64s(is, v * d);
  return emb;
}

VertexFeatures vertex_features(const DiagnosisSample& sample, const EmbeddingMatrix& emb,
                               const Vocabulary& vocab, std::span<const DeviceId> vertices,
                               const FeatureCaps& caps) {
  if (vocab.size() != emb.vocab_size) {
    throw InvalidArgument("vocabulary and embedding sizes differ");
  }
  struct Acc {
    std::vector<double> sum;
    std::size_t tokens = 0;
    std::size_t records = 0;
    int max_severity = 0;
    std::set<std::string_view> names;
  };
  const std::size_t d = emb.dim;
  std::map<DeviceId, Acc> acc;
  for (DeviceId v : vertices) acc[v].sum.assign(d, 0.0);

  // Canonical accumulation order keeps the result independent of record order.
  std::vector<const AlarmRecord*> ordered;
  for (const auto& r : sample.records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const AlarmRecord* x, const AlarmRecord* y) { return x->record_id < y->record_id; });

  std::set<DeviceId> dropped;
  for (const AlarmRecord* rp : ordered) {
    const AlarmRecord& r = *rp;
    if (!r.device_id) continue;
    auto it = acc.find(*r.device_id);
    if (it == acc.end()) {
      dropped.insert(*r.device_id);
      continue;
    }
    Acc& a = it->second;
    for (int t : vocab.encode(r.alarm_name)) {
      const auto row = emb.in_row(t);
      for (std::size_t i = 0; i < d; ++i) a.sum[i] += row[i];
      ++a.tokens;
    }
    ++a.records;
    a.max_severity = std::max(a.max_severity, static_cast<int>(r.severity));
    a.names.insert(r.alarm_name);
  }

  auto scaled = [](double value, double cap) { return std::clamp(value / cap, 0.0, 1.0); };
  VertexFeatures out;
  out.dim = d + kSideFeatures;
  out.dropped_devices = dropped.size();
  for (auto& [v, a] : acc) {
    std::vector<double> row(out.dim, 0.0);
    if (a.records > 0) {
      if (a.tokens > 0) {
        for (std::size_t i = 0; i < d; ++i) row[i] = a.sum[i] / static_cast<double>(a.tokens);
      }
      row[d] = scaled(static_cast<double>(a.records), caps.record_count);
      row[d + 1] = scaled(static_cast<double>(a.max_severity), caps.severity_rank);
      row[d + 2] = scaled(static_cast<double>(a.names.size()), caps.distinct_alarms);
    }
    out.rows.emplace(v, std::move(row));
  }
  return out;
}

}  // namespace telops
