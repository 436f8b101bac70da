#include "persona/textrep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "persona/errors.hpp"

namespace persona {

namespace {

constexpr std::string_view kPunctuation = ".,!?;:'\"()";

bool is_punct(char c) { return kPunctuation.find(c) != std::string_view::npos; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : tokens_{std::string(kUnknownToken)}, df_{0} { rebuild_index(); }

void Vocabulary::rebuild_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<TokenId>(i));
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> documents, std::size_t min_freq) {
  if (documents.empty()) throw ValidationError("build_vocab: empty corpus");
  if (min_freq < 1) throw ValidationError("build_vocab: min_freq must be >= 1");

  std::map<std::string, std::size_t> freq;
  std::map<std::string, std::size_t> doc_freq;
  for (const auto& doc : documents) {
    std::unordered_set<std::string_view> seen;
    for (const auto& tok : doc) {
      ++freq[tok];
      if (seen.insert(tok).second) ++doc_freq[tok];
    }
  }

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : freq) {
    if (n >= min_freq && tok != kUnknownToken) kept.emplace_back(tok, n);
  }
  // freq is a std::map, so equal counts are already in lexicographic order.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  v.n_docs_ = documents.size();
  for (const auto& [tok, n] : kept) {
    v.tokens_.push_back(tok);
    v.df_.push_back(doc_freq[tok]);
  }
  // df of the unknown slot: documents containing at least one dropped token.
  std::unordered_set<std::string_view> known(v.tokens_.begin() + 1, v.tokens_.end());
  std::size_t unk_docs = 0;
  for (const auto& doc : documents) {
    if (std::any_of(doc.begin(), doc.end(), [&](const std::string& t) { return !known.contains(t); })) ++unk_docs;
  }
  v.df_[0] = unk_docs;
  v.rebuild_index();
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknownId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  const auto toks = tokenize(text);
  return encode(std::span<const std::string>(toks));
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    mix(tokens_[i]);
    mix(std::to_string(df_[i]));
  }
  mix(std::to_string(n_docs_));
  return h;
}

void Vocabulary::save(std::ostream& out) const {
  out << "#vocab v1 n_docs=" << n_docs_ << " tokenizer=v" << kTokenizerVersion << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\t' << df_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ValidationError("vocab: missing header");
  std::istringstream hs(header);
  std::string magic, version, docs_field, tok_field;
  hs >> magic >> version >> docs_field >> tok_field;
  if (magic != "#vocab" || version != "v1") throw ValidationError("vocab: unsupported header '" + header + "'");
  if (tok_field != "tokenizer=v" + std::to_string(kTokenizerVersion)) {
    throw ValidationError("vocab: tokenizer version mismatch ('" + tok_field + "')");
  }
  if (docs_field.rfind("n_docs=", 0) != 0) throw ValidationError("vocab: missing n_docs");

  Vocabulary v;
  v.tokens_.clear();
  v.df_.clear();
  v.n_docs_ = std::stoull(docs_field.substr(7));

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ValidationError("vocab: malformed line " + std::to_string(line_no));
    const std::size_t rank = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
    if (rank != v.tokens_.size()) throw ValidationError("vocab: rank out of order at line " + std::to_string(line_no));
    const std::size_t df = std::stoull(line.substr(t2 + 1));
    if (df > v.n_docs_) throw ValidationError("vocab: df exceeds n_docs at line " + std::to_string(line_no));
    v.tokens_.push_back(line.substr(0, t1));
    v.df_.push_back(df);
  }
  if (v.tokens_.empty() || v.tokens_[0] != kUnknownToken) throw ValidationError("vocab: index 0 must be the unknown token");
  v.rebuild_index();
  return v;
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  save(out);
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read vocabulary " + path);
  return load(in);
}

// ---------------------------------------------------------------- weights

IdfTable::IdfTable(const Vocabulary& vocab) {
  weights_.resize(vocab.size());
  const double n = static_cast<double>(vocab.n_docs());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    weights_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(vocab.df(static_cast<TokenId>(i))))) + 1.0;
  }
}

double ZipfWeights::tf_at_rank(double rank) { return 1e6 * std::pow(rank, -1.07); }

double ZipfWeights::alpha_from_tf(double tf) { return 1.0 / (1.0 + std::log(1.0 + tf)); }

ZipfWeights::ZipfWeights(const Vocabulary& vocab) {
  const std::size_t d = vocab.size();
  tf_.resize(d);
  alpha_.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double rank = i == 0 ? static_cast<double>(d) : static_cast<double>(i);
    tf_[i] = tf_at_rank(rank);
    alpha_[i] = alpha_from_tf(tf_[i]);
  }
}

// ---------------------------------------------------------------- sparse vectors

SparseVector bow(std::span<const TokenId> ids) {
  std::map<TokenId, double> counts;
  for (TokenId id : ids) counts[id] += 1.0;
  SparseVector v;
  v.reserve(counts.size());
  for (const auto& [id, c] : counts) v.push_back({id, c});
  return v;
}

SparseVector tfidf(const SparseVector& counts, const IdfTable& idf) {
  SparseVector v;
  v.reserve(counts.size());
  for (const auto& e : counts) {
    const double w = e.weight * idf[e.index];
    if (w != 0.0) v.push_back({e.index, w});
  }
  return v;
}

double dot(const SparseVector& u, const SparseVector& v) {
  double s = 0.0;
  auto a = u.begin();
  auto b = v.begin();
  while (a != u.end() && b != v.end()) {
    if (a->index < b->index) {
      ++a;
    } else if (b->index < a->index) {
      ++b;
    } else {
      s += a->weight * b->weight;
      ++a;
      ++b;
    }
  }
  return s;
}

double norm(const SparseVector& v) {
  double s = 0.0;
  for (const auto& e : v) s += e.weight * e.weight;
  return std::sqrt(s);
}

double cosine(const SparseVector& u, const SparseVector& v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError("cosine: dimension mismatch");
  // Scale each side by its largest magnitude so huge entries cannot overflow.
  double su = 0.0, sv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    su = std::max(su, std::abs(u[i]));
    sv = std::max(sv, std::abs(v[i]));
  }
  if (su == 0.0 || sv == 0.0 || !std::isfinite(su) || !std::isfinite(sv)) return 0.0;
  double uv = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i] / su, b = v[i] / sv;
    uv += a * b;
    uu += a * a;
    vv += b * b;
  }
  return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

SparseVector tfidf_vector(std::string_view text, const Vocabulary& vocab, const IdfTable& idf) {
  const auto ids = vocab.encode(text);
  return tfidf(bow(ids), idf);
}

}  // namespace persona
