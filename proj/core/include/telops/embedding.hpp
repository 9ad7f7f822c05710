#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "telops/common.hpp"
#include "telops/ingestion.hpp"

namespace telops {

// Lower-cased alphanumeric runs: "Fan Error" and "fan_error" both give {fan, error}.
std::vector<std::string> tokenize(std::string_view alarm_name);

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // tokens[0] must be the UNK token.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int index_of(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<int> encode(std::string_view alarm_name) const;
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& x, const Vocabulary& y) { return x.tokens_ == y.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens seen at least min_count times, indexed by (frequency desc, token asc)
// after UNK.
Vocabulary build_vocab(std::span<const AlarmLog> logs, std::size_t min_count);

std::string vocab_to_json(const Vocabulary& vocab);
Vocabulary vocab_from_json(std::string_view text);

struct EmbeddingMatrix {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  std::vector<double> input;   // vocab_size x dim, row-major
  std::vector<double> output;  // context vectors, same shape

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t v, std::size_t d)
      : vocab_size(v), dim(d), input(v * d, 0.0), output(v * d, 0.0) {}

  std::span<double> in_row(int i) { return {input.data() + static_cast<std::size_t>(i) * dim, dim}; }
  std::span<const double> in_row(int i) const {
    return {input.data() + static_cast<std::size_t>(i) * dim, dim};
  }
  std::span<double> out_row(int i) { return {output.data() + static_cast<std::size_t>(i) * dim, dim}; }
  std::span<const double> out_row(int i) const {
    return {output.data() + static_cast<std::size_t>(i) * dim, dim};
  }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

struct SkipGramParams {
  std::size_t dim = 32;
  std::size_t window = 4;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double lr = 0.025;
  std::uint64_t seed = 1;
};

// Token-index sequences, one per (sample, device), in timestamp order.
std::vector<std::vector<int>> skipgram_corpus(const std::vector<DiagnosisSample>& samples,
                                              const Vocabulary& vocab);

EmbeddingMatrix init_embedding(std::size_t vocab_size, const SkipGramParams& params);

// Sequential SGD on the negative-sampling objective; negatives follow the
// unigram^(3/4) distribution of the corpus.
EmbeddingMatrix train_skipgram(const std::vector<std::vector<int>>& sequences,
                               std::size_t vocab_size, const SkipGramParams& params);

// -log s(u_o.v_c) - sum_i log s(-u_{n_i}.v_c)
double skipgram_loss(const EmbeddingMatrix& emb, int center, int context,
                     std::span<const int> negatives);

// Dense gradient of skipgram_loss, shaped like the matrix.
EmbeddingMatrix skipgram_gradient(const EmbeddingMatrix& emb, int center, int context,
                                  std::span<const int> negatives);

double cosine(std::span<const double> x, std::span<const double> y);

// Checkpoint: "TLOPSEMB", V, d, vocab hash, input rows, output rows (all LE).
void save_embedding(std::ostream& os, const EmbeddingMatrix& emb, std::uint64_t vocab_hash);
EmbeddingMatrix load_embedding(std::istream& is, std::uint64_t expected_vocab_hash);

// Scale caps for the per-device side features; values are clipped to [0, 1].
struct FeatureCaps {
  double record_count = 8.0;
  double severity_rank = kMaxSeverityRank;
  double distinct_alarms = 4.0;
};

inline constexpr std::size_t kSideFeatures = 3;

struct VertexFeatures {
  std::size_t dim = 0;
  std::map<DeviceId, std::vector<double>> rows;
  std::size_t dropped_devices = 0;  // alarmed devices outside the vertex set
};

// Per vertex: mean input vector of its alarm tokens in the window (zero if
// none), followed by record count, max severity rank, distinct alarm count.
VertexFeatures vertex_features(const DiagnosisSample& sample, const EmbeddingMatrix& emb,
                               const Vocabulary& vocab, std::span<const DeviceId> vertices,
                               const FeatureCaps& caps = {});

}  // namespace telops
