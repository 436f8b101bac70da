#pragma once

// Next-utterance rankers: the tf-idf IR baseline, the trained
// bag-of-embeddings ranker, the profile memory network and its key-value
// extension. All embedding models share one D x d word table.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "persona/corpus.hpp"
#include "persona/textrep.hpp"

namespace persona {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct RankEntry {
  std::size_t candidate = 0;
  double score = 0.0;
  bool operator==(const RankEntry&) const = default;
};

// Descending score; equal scores keep ascending candidate index.
struct RankResult {
  std::vector<RankEntry> entries;

  std::size_t top() const { return entries.at(0).candidate; }
  bool operator==(const RankResult&) const = default;
};

RankResult rank_by_scores(std::span<const double> scores);

class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual RankResult rank(const Example& example) const = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------- IR baseline

class IrRanker : public Ranker {
 public:
  explicit IrRanker(Vocabulary vocab);

  // Query = context utterances followed by profile sentences, as one bag.
  RankResult rank(const Example& example) const override;
  std::string name() const override { return "ir"; }

  const Vocabulary& vocab() const { return vocab_; }
  const IdfTable& idf() const { return idf_; }

 private:
  Vocabulary vocab_;
  IdfTable idf_;
};

// Documents for vocabulary building: every utterance and persona sentence
// (both variants) of the given episodes, tokenized.
std::vector<std::vector<std::string>> vocabulary_documents(const std::vector<Episode>& episodes);

// ---------------------------------------------------------------- embedding primitives

struct EmbeddingMatrix {
  Mat W;  // row i = embedding of vocabulary index i
  int tokenizer_version = kTokenizerVersion;
  std::uint64_t vocab_fingerprint = 0;

  std::size_t dim() const { return static_cast<std::size_t>(W.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(W.rows()); }
};

// Sum of rows over tokens (with repetition); zero vector for no tokens.
Vec embed_sentence(std::span<const TokenId> tokens, const Mat& W);

// Cosine on dense vectors; 0 when either norm is 0. Not clamped, so it stays
// consistent with its analytic derivative.
double dense_cosine(const Vec& a, const Vec& b);

// d cos(a, b) / d a. Zero when either norm is 0.
Vec cosine_grad_a(const Vec& a, const Vec& b);

// exp(z_i) / sum_j exp(z_j), max-shifted.
Vec softmax(const Vec& logits);

// sum_j max(0, margin - sim_pos + sim_neg_j)
double margin_loss(double sim_pos, std::span<const double> sim_negs, double margin);

// q+ = q + sum_i s_i p_i with s = softmax(cos(q, p_i)), repeated `hops` times.
// An empty profile returns q unchanged.
Vec profile_attend(const Vec& q, std::span<const Vec> profile, int hops = 1);

// ---------------------------------------------------------------- key-value memory

inline constexpr std::size_t kUnlimitedTopM = std::numeric_limits<std::size_t>::max();

struct KvEntry {
  Vec key;    // embedded dialogue history
  Vec value;  // embedded next utterance
  std::string text;
};

struct KvStore {
  std::vector<KvEntry> entries;
  std::size_t top_m = 50;
};

// Keys are the flattened histories of the training examples (examples with
// no history are skipped), values their gold replies. No training happens here.
KvStore kv_build(const std::vector<Example>& train, const Vocabulary& vocab, const Mat& W, std::size_t top_m = 50);

// Attends over the top_m keys by cos(q+, key) and returns q+ + sum_j s_j v_j,
// or just the weighted sum when residual is false.
Vec kv_attend(const Vec& q_plus, const KvStore& store, bool residual = true);

// ---------------------------------------------------------------- trained rankers

enum class RankerKind { plain, profile_memory, kv_profile_memory };

std::string_view to_string(RankerKind k);

class EmbeddingRanker : public Ranker {
 public:
  EmbeddingRanker(Vocabulary vocab, EmbeddingMatrix embeddings, RankerKind kind, int hops = 1);

  void attach_kv(KvStore store, bool residual = true);

  Vec encode_query(const Example& example) const;
  Vec encode_text(std::string_view text) const;
  RankResult rank(const Example& example) const override;
  std::string name() const override { return std::string(to_string(kind_)); }

  const Vocabulary& vocab() const { return vocab_; }
  const EmbeddingMatrix& embeddings() const { return embeddings_; }
  RankerKind kind() const { return kind_; }
  int hops() const { return hops_; }
  const std::optional<KvStore>& kv() const { return kv_; }
  bool kv_residual() const { return kv_residual_; }

 private:
  Vocabulary vocab_;
  EmbeddingMatrix embeddings_;
  RankerKind kind_;
  int hops_;
  std::optional<KvStore> kv_;
  bool kv_residual_ = true;
};

// ---------------------------------------------------------------- model files

void save_kv(std::ostream& out, const KvStore& store);
KvStore load_kv(std::istream& in, std::size_t dim);

// Binary PRNK file; the vocabulary lives next to it in `<path>.vocab`.
void save_ranker(const std::string& path, const EmbeddingRanker& model);
std::unique_ptr<EmbeddingRanker> load_ranker(const std::string& path);

}  // namespace persona
