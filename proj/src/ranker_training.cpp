#include "persona/ranker_training.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "persona/errors.hpp"
#include "persona/rng.hpp"

namespace persona {

void TrainConfig::validate() const {
  if (dim < 1) throw ValidationError("train: dim must be >= 1");
  if (!(margin > 0.0)) throw ValidationError("train: margin must be > 0");
  if (negatives < 1) throw ValidationError("train: negatives must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be > 0");
  if (hops < 1) throw ValidationError("train: hops must be >= 1");
  if (!(init_scale > 0.0)) throw ValidationError("train: init_scale must be > 0");
  if (l2 < 0.0 || lr_decay < 0.0) throw ValidationError("train: l2 and lr_decay must be >= 0");
}

namespace {

// Intermediate values of one attention hop, kept for the backward pass.
struct HopTrace {
  Vec q_in;
  Vec weights;
};

struct Forward {
  Vec q0;
  std::vector<Vec> profile;
  std::vector<HopTrace> hops;
  Vec q;  // final query encoding
  Vec pos;
  std::vector<Vec> negs;
  double sim_pos = 0.0;
  std::vector<double> sim_negs;
  double loss = 0.0;
};

Forward forward(const Mat& W, const RankingInstance& inst, const ObjectiveOptions& opts) {
  Forward f;
  f.q0 = embed_sentence(inst.query, W);
  f.q = f.q0;
  if (opts.profile_attention && !inst.profile.empty()) {
    for (const auto& s : inst.profile) f.profile.push_back(embed_sentence(s, W));
    for (int h = 0; h < opts.hops; ++h) {
      HopTrace tr;
      tr.q_in = f.q;
      Vec z(static_cast<Eigen::Index>(f.profile.size()));
      for (std::size_t i = 0; i < f.profile.size(); ++i) z[static_cast<Eigen::Index>(i)] = dense_cosine(f.q, f.profile[i]);
      tr.weights = softmax(z);
      Vec next = f.q;
      for (std::size_t i = 0; i < f.profile.size(); ++i) next += tr.weights[static_cast<Eigen::Index>(i)] * f.profile[i];
      f.q = std::move(next);
      f.hops.push_back(std::move(tr));
    }
  }
  f.pos = embed_sentence(inst.positive, W);
  f.sim_pos = dense_cosine(f.q, f.pos);
  for (const auto& n : inst.negatives) {
    f.negs.push_back(embed_sentence(n, W));
    f.sim_negs.push_back(dense_cosine(f.q, f.negs.back()));
  }
  f.loss = margin_loss(f.sim_pos, f.sim_negs, opts.margin);
  return f;
}

// Backward pass; `scatter(tokens, g)` receives the gradient of each embedded sentence.
template <class Scatter>
void backward(const Forward& f, const RankingInstance& inst, const ObjectiveOptions& opts, Scatter&& scatter) {
  const Eigen::Index d = f.q.size();
  double d_pos = 0.0;
  Vec dq = Vec::Zero(d);
  for (std::size_t j = 0; j < f.negs.size(); ++j) {
    if (opts.margin - f.sim_pos + f.sim_negs[j] <= 0.0) continue;
    d_pos -= 1.0;
    dq += cosine_grad_a(f.q, f.negs[j]);
    scatter(inst.negatives[j], cosine_grad_a(f.negs[j], f.q));
  }
  if (d_pos == 0.0) return;
  dq += d_pos * cosine_grad_a(f.q, f.pos);
  scatter(inst.positive, d_pos * cosine_grad_a(f.pos, f.q));

  std::vector<Vec> d_profile(f.profile.size(), Vec::Zero(d));
  for (auto h = f.hops.rbegin(); h != f.hops.rend(); ++h) {
    const Vec& s = h->weights;
    Vec ds(s.size());
    for (std::size_t i = 0; i < f.profile.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      d_profile[i] += s[ii] * dq;
      ds[ii] = dq.dot(f.profile[i]);
    }
    const Vec dz = s.cwiseProduct((ds.array() - s.dot(ds)).matrix());
    Vec dq_in = dq;
    for (std::size_t i = 0; i < f.profile.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (dz[ii] == 0.0) continue;
      dq_in += dz[ii] * cosine_grad_a(h->q_in, f.profile[i]);
      d_profile[i] += dz[ii] * cosine_grad_a(f.profile[i], h->q_in);
    }
    dq = std::move(dq_in);
  }
  for (std::size_t i = 0; i < f.profile.size(); ++i) scatter(inst.profile[i], d_profile[i]);
  scatter(inst.query, dq);
}

std::vector<TokenId> encode_joined(const Vocabulary& vocab, const std::vector<std::string>& texts) {
  std::vector<TokenId> ids;
  for (const auto& t : texts) {
    const auto part = vocab.encode(t);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

}  // namespace

double ranking_loss(const Mat& W, const RankingInstance& inst, const ObjectiveOptions& opts) {
  return forward(W, inst, opts).loss;
}

double ranking_loss_and_gradient(const Mat& W, const RankingInstance& inst, const ObjectiveOptions& opts, Mat& grad) {
  const Forward f = forward(W, inst, opts);
  backward(f, inst, opts, [&](const std::vector<TokenId>& toks, const Vec& g) {
    for (TokenId t : toks) grad.row(t) += g.transpose();
  });
  return f.loss;
}

RankingInstance make_instance(const Example& ex, const Vocabulary& vocab, bool profile_attention) {
  RankingInstance inst;
  inst.query = encode_joined(vocab, ex.context);
  if (profile_attention) {
    for (const auto& s : ex.profile) inst.profile.push_back(vocab.encode(s));
  } else {
    const auto prof = encode_joined(vocab, ex.profile);
    inst.query.insert(inst.query.end(), prof.begin(), prof.end());
  }
  inst.positive = vocab.encode(ex.gold);
  return inst;
}

EmbeddingMatrix train_ranker(const std::vector<Example>& examples, const Vocabulary& vocab, const TrainConfig& config,
                             bool use_profile_attention, TrainingLog* log) {
  config.validate();
  if (examples.empty()) throw ValidationError("train_ranker: empty example list");

  const auto D = static_cast<Eigen::Index>(vocab.size());
  const auto d = static_cast<Eigen::Index>(config.dim);
  EmbeddingMatrix model;
  model.vocab_fingerprint = vocab.fingerprint();
  model.W.resize(D, d);
  {
    Rng init(derive_seed(config.seed, 0));
    for (Eigen::Index r = 0; r < D; ++r)
      for (Eigen::Index c = 0; c < d; ++c) model.W(r, c) = init.uniform(-config.init_scale, config.init_scale);
  }

  std::vector<RankingInstance> base;
  base.reserve(examples.size());
  for (const auto& ex : examples) base.push_back(make_instance(ex, vocab, use_profile_attention));

  const ObjectiveOptions opts{config.margin, use_profile_attention, config.hops};
  Mat& W = model.W;
  std::map<TokenId, Vec> pending;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, epoch + 1));
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const double lr = config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(epoch));

    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const std::size_t i = order[step];
      RankingInstance inst = base[i];
      if (examples.size() > 1) {
        for (std::size_t n = 0; n < config.negatives; ++n) {
          std::size_t j = i;
          for (int attempt = 0; attempt < 16 && (j == i || examples[j].gold == examples[i].gold); ++attempt) {
            j = rng.index(examples.size());
          }
          if (j == i) continue;
          inst.negatives.push_back(base[j].positive);
        }
      }

      const Forward f = forward(W, inst, opts);
      if (!std::isfinite(f.loss)) {
        throw Error("train_ranker: non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      }
      epoch_loss += f.loss;
      pending.clear();
      backward(f, inst, opts, [&](const std::vector<TokenId>& toks, const Vec& g) {
        for (TokenId t : toks) {
          auto [it, fresh] = pending.try_emplace(t, g);
          if (!fresh) it->second += g;
        }
      });
      for (auto& [t, g] : pending) {
        if (config.l2 > 0.0) g += config.l2 * W.row(t).transpose();
        W.row(t) -= lr * g.transpose();
      }
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
  }
  return model;
}

}  // namespace persona
