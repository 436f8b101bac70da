#include "persona/rankers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "persona/errors.hpp"

namespace persona {

RankResult rank_by_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) { return std::isnan(scores[i]) ? -std::numeric_limits<double>::infinity() : scores[i]; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  RankResult r;
  r.entries.reserve(order.size());
  for (std::size_t i : order) r.entries.push_back({i, scores[i]});
  return r;
}

// ---------------------------------------------------------------- IR baseline

IrRanker::IrRanker(Vocabulary vocab) : vocab_(std::move(vocab)), idf_(vocab_) {}

RankResult IrRanker::rank(const Example& example) const {
  std::vector<TokenId> query;
  auto append = [&](const std::string& s) {
    const auto ids = vocab_.encode(s);
    query.insert(query.end(), ids.begin(), ids.end());
  };
  for (const auto& u : example.context) append(u);
  for (const auto& p : example.profile) append(p);
  const SparseVector qv = tfidf(bow(query), idf_);

  std::vector<double> scores;
  scores.reserve(example.candidates.size());
  for (const auto& c : example.candidates) scores.push_back(cosine(qv, tfidf_vector(c, vocab_, idf_)));
  return rank_by_scores(scores);
}

std::vector<std::vector<std::string>> vocabulary_documents(const std::vector<Episode>& episodes) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& ep : episodes) {
    for (Speaker sp : {Speaker::p0, Speaker::p1}) {
      for (Variant v : {Variant::original, Variant::revised}) {
        if (const Persona* p = ep.persona(sp, v)) {
          for (const auto& s : p->sentences) docs.push_back(tokenize(s));
        }
      }
    }
    for (const auto& t : ep.turns) {
      if (t.text != kSilenceToken) docs.push_back(tokenize(t.text));
    }
  }
  return docs;
}

// ---------------------------------------------------------------- embedding primitives

Vec embed_sentence(std::span<const TokenId> tokens, const Mat& W) {
  Vec v = Vec::Zero(W.cols());
  for (TokenId t : tokens) v += W.row(t).transpose();
  return v;
}

double dense_cosine(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Vec cosine_grad_a(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return Vec::Zero(a.size());
  const double c = a.dot(b) / (na * nb);
  return b / (na * nb) - c * a / (na * na);
}

Vec softmax(const Vec& logits) {
  if (logits.size() == 0) return logits;
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double margin_loss(double sim_pos, std::span<const double> sim_negs, double margin) {
  double total = 0.0;
  for (double n : sim_negs) total += std::max(0.0, margin - sim_pos + n);
  return total;
}

Vec profile_attend(const Vec& q, std::span<const Vec> profile, int hops) {
  if (profile.empty()) return q;
  Vec cur = q;
  for (int h = 0; h < hops; ++h) {
    Vec z(static_cast<Eigen::Index>(profile.size()));
    for (std::size_t i = 0; i < profile.size(); ++i) z[static_cast<Eigen::Index>(i)] = dense_cosine(cur, profile[i]);
    const Vec s = softmax(z);
    Vec next = cur;
    for (std::size_t i = 0; i < profile.size(); ++i) next += s[static_cast<Eigen::Index>(i)] * profile[i];
    cur = std::move(next);
  }
  return cur;
}

// ---------------------------------------------------------------- key-value memory

namespace {

std::vector<TokenId> encode_all(const Vocabulary& vocab, const std::vector<std::string>& texts) {
  std::vector<TokenId> ids;
  for (const auto& t : texts) {
    const auto part = vocab.encode(t);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

}  // namespace

KvStore kv_build(const std::vector<Example>& train, const Vocabulary& vocab, const Mat& W, std::size_t top_m) {
  if (top_m == 0) throw ValidationError("kv_build: top_M must be >= 1");
  KvStore store;
  store.top_m = top_m;
  for (const auto& ex : train) {
    if (ex.context.empty()) continue;
    const auto key_ids = encode_all(vocab, ex.context);
    const auto value_ids = vocab.encode(ex.gold);
    store.entries.push_back({embed_sentence(key_ids, W), embed_sentence(value_ids, W), ex.gold});
  }
  if (store.entries.empty()) throw ValidationError("kv_build: no training example has a dialogue history");
  return store;
}

Vec kv_attend(const Vec& q_plus, const KvStore& store, bool residual) {
  if (store.entries.empty()) throw ValidationError("kv_attend: empty store");
  std::vector<double> sims(store.entries.size());
  for (std::size_t j = 0; j < store.entries.size(); ++j) sims[j] = dense_cosine(q_plus, store.entries[j].key);

  const std::size_t m = std::min(store.top_m, store.entries.size());
  std::vector<std::size_t> order(store.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                    [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
  order.resize(m);
  // Summation runs in store order so the result does not depend on top_m once
  // every entry is selected.
  std::sort(order.begin(), order.end());

  Vec z(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) z[static_cast<Eigen::Index>(i)] = sims[order[i]];
  const Vec s = softmax(z);
  Vec out = residual ? q_plus : Vec::Zero(q_plus.size());
  for (std::size_t i = 0; i < m; ++i) out += s[static_cast<Eigen::Index>(i)] * store.entries[order[i]].value;
  return out;
}

// ---------------------------------------------------------------- trained rankers

std::string_view to_string(RankerKind k) {
  switch (k) {
    case RankerKind::plain: return "ranker";
    case RankerKind::profile_memory: return "profile-mem";
    case RankerKind::kv_profile_memory: return "kv-profile-mem";
  }
  return "ranker";
}

EmbeddingRanker::EmbeddingRanker(Vocabulary vocab, EmbeddingMatrix embeddings, RankerKind kind, int hops)
    : vocab_(std::move(vocab)), embeddings_(std::move(embeddings)), kind_(kind), hops_(hops) {
  if (embeddings_.rows() != vocab_.size()) {
    throw ValidationError("embedding rows (" + std::to_string(embeddings_.rows()) + ") != vocabulary size (" +
                          std::to_string(vocab_.size()) + ")");
  }
  if (embeddings_.vocab_fingerprint != 0 && embeddings_.vocab_fingerprint != vocab_.fingerprint()) {
    throw ValidationError("embedding matrix was trained against a different vocabulary");
  }
  if (hops_ < 1) throw ValidationError("hops must be >= 1");
}

void EmbeddingRanker::attach_kv(KvStore store, bool residual) {
  if (store.entries.empty()) throw ValidationError("attach_kv: empty store");
  if (store.entries.front().key.size() != static_cast<Eigen::Index>(embeddings_.dim())) {
    throw ValidationError("attach_kv: store dimension mismatch");
  }
  kv_ = std::move(store);
  kv_residual_ = residual;
  kind_ = RankerKind::kv_profile_memory;
}

Vec EmbeddingRanker::encode_text(std::string_view text) const {
  const auto ids = vocab_.encode(text);
  return embed_sentence(ids, embeddings_.W);
}

Vec EmbeddingRanker::encode_query(const Example& example) const {
  const Mat& W = embeddings_.W;
  if (kind_ == RankerKind::plain) {
    auto ids = encode_all(vocab_, example.context);
    const auto prof = encode_all(vocab_, example.profile);
    ids.insert(ids.end(), prof.begin(), prof.end());
    return embed_sentence(ids, W);
  }
  const Vec q = embed_sentence(encode_all(vocab_, example.context), W);
  std::vector<Vec> profile;
  profile.reserve(example.profile.size());
  for (const auto& s : example.profile) profile.push_back(encode_text(s));
  Vec q_plus = profile_attend(q, profile, hops_);
  if (kind_ == RankerKind::kv_profile_memory) {
    if (!kv_) throw Error("kv-profile-mem ranker has no key-value store attached");
    return kv_attend(q_plus, *kv_, kv_residual_);
  }
  return q_plus;
}

RankResult EmbeddingRanker::rank(const Example& example) const {
  const Vec q = encode_query(example);
  std::vector<double> scores;
  scores.reserve(example.candidates.size());
  for (const auto& c : example.candidates) scores.push_back(dense_cosine(q, encode_text(c)));
  return rank_by_scores(scores);
}

}  // namespace persona
