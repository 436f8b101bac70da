#pragma once

// Text representation shared by every model: the frozen tokenizer, the
// frequency-ranked vocabulary, tf-idf bags of words and Zipf-rank weights.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace persona {

inline constexpr int kTokenizerVersion = 1;

// Lowercases ASCII, isolates .,!?;:'"() as standalone tokens, splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

using TokenId = std::uint32_t;

inline constexpr TokenId kUnknownId = 0;
inline constexpr std::string_view kUnknownToken = "__unk__";

class Vocabulary {
 public:
  Vocabulary();

  // Documents are pre-tokenized. Tokens seen fewer than min_freq times map to
  // the unknown index. Indices 1..D-1 follow descending frequency, ties broken
  // lexicographically.
  static Vocabulary build(std::span<const std::vector<std::string>> documents, std::size_t min_freq = 1);

  std::size_t size() const { return tokens_.size(); }
  std::size_t n_docs() const { return n_docs_; }

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t df(TokenId id) const { return df_.at(id); }
  bool contains(std::string_view token) const;

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<TokenId> encode(std::string_view text) const;

  // Order-sensitive digest of tokens and document frequencies; stored in model
  // files to detect a model being paired with the wrong vocabulary.
  std::uint64_t fingerprint() const;

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save_file(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

  bool operator==(const Vocabulary& o) const {
    return tokens_ == o.tokens_ && df_ == o.df_ && n_docs_ == o.n_docs_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> df_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t n_docs_ = 0;

  void rebuild_index();
};

// ---------------------------------------------------------------- weights

class IdfTable {
 public:
  IdfTable() = default;
  // idf(t) = ln((1 + n_docs) / (1 + df(t))) + 1
  explicit IdfTable(const Vocabulary& vocab);
  explicit IdfTable(std::vector<double> weights) : weights_(std::move(weights)) {}

  double operator[](TokenId id) const { return id < weights_.size() ? weights_[id] : 0.0; }
  std::size_t size() const { return weights_.size(); }

 private:
  std::vector<double> weights_;
};

// Rank-based term-frequency estimate tf(idx) = 1e6 * idx^-1.07 and the
// inverse-frequency word weight alpha = 1 / (1 + ln(1 + tf)).
class ZipfWeights {
 public:
  ZipfWeights() = default;
  explicit ZipfWeights(const Vocabulary& vocab);

  static double tf_at_rank(double rank);
  static double alpha_from_tf(double tf);

  // Vocabulary index i >= 1 has rank i. The unknown token is treated as rarer
  // than any known word (rank D).
  double tf(TokenId id) const { return tf_.at(id); }
  double alpha(TokenId id) const { return alpha_.at(id); }
  std::size_t size() const { return tf_.size(); }

 private:
  std::vector<double> tf_;
  std::vector<double> alpha_;
};

// ---------------------------------------------------------------- sparse vectors

struct SparseEntry {
  TokenId index;
  double weight;
  bool operator==(const SparseEntry&) const = default;
};

// Sorted by strictly increasing index; zero weights are never stored.
using SparseVector = std::vector<SparseEntry>;

SparseVector bow(std::span<const TokenId> ids);
SparseVector tfidf(const SparseVector& counts, const IdfTable& idf);

double dot(const SparseVector& u, const SparseVector& v);
double norm(const SparseVector& v);
double cosine(const SparseVector& u, const SparseVector& v);
double cosine(std::span<const double> u, std::span<const double> v);

// Convenience: text -> tokenize -> encode -> bow -> tfidf.
SparseVector tfidf_vector(std::string_view text, const Vocabulary& vocab, const IdfTable& idf);

}  // namespace persona
