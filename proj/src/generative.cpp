#include "persona/generative.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "persona/errors.hpp"
#include "persona/rng.hpp"

namespace persona {

std::string_view to_string(GenMode m) {
  switch (m) {
    case GenMode::seq2seq: return "seq2seq";
    case GenMode::lm: return "lm";
    case GenMode::profile_memory: return "gen-profile-mem";
  }
  return "seq2seq";
}

GenMode parse_gen_mode(std::string_view s) {
  if (s == "seq2seq") return GenMode::seq2seq;
  if (s == "lm") return GenMode::lm;
  if (s == "gen-profile-mem" || s == "profile_memory") return GenMode::profile_memory;
  throw ValidationError("unknown generative mode '" + std::string(s) + "'");
}

void GenConfig::validate() const {
  if (hidden < 1 || embed < 1) throw ValidationError("generative: hidden and embed sizes must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("generative: learning_rate must be > 0");
  if (!(clip_norm > 0.0)) throw ValidationError("generative: clip_norm must be > 0");
  if (!(init_scale >= 0.0)) throw ValidationError("generative: init_scale must be >= 0");
}

// ---------------------------------------------------------------- parameters

GenParams GenParams::zeros(GenMode mode, Eigen::Index vocab, Eigen::Index embed, Eigen::Index hidden) {
  GenParams p;
  p.E = Mat::Zero(vocab, embed);
  p.enc = mode == GenMode::lm ? LstmParams::zeros(0, 0) : LstmParams::zeros(embed, hidden);
  p.dec = LstmParams::zeros(embed, hidden);
  p.Wo = Mat::Zero(vocab, hidden);
  if (mode == GenMode::profile_memory) {
    p.Wa = Mat::Zero(embed, hidden);
    p.Wc = Mat::Zero(embed, 2 * embed);
  }
  return p;
}

std::vector<Mat*> GenParams::blocks() { return {&E, &enc.Wx, &enc.Wh, &enc.b, &dec.Wx, &dec.Wh, &dec.b, &Wo, &Wa, &Wc}; }

std::vector<const Mat*> GenParams::blocks() const {
  return {&E, &enc.Wx, &enc.Wh, &enc.b, &dec.Wx, &dec.Wh, &dec.b, &Wo, &Wa, &Wc};
}

std::vector<std::string> GenParams::block_names() {
  return {"E", "enc.Wx", "enc.Wh", "enc.b", "dec.Wx", "dec.Wh", "dec.b", "Wo", "Wa", "Wc"};
}

double GenParams::squared_norm() const {
  double s = 0.0;
  for (const Mat* m : blocks()) s += m->squaredNorm();
  return s;
}

void GenParams::scale(double s) {
  for (Mat* m : blocks()) *m *= s;
}

void GenParams::axpy(double s, const GenParams& other) {
  auto mine = blocks();
  auto theirs = other.blocks();
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i] += s * *theirs[i];
}

void GenParams::set_zero() {
  for (Mat* m : blocks()) m->setZero();
}

bool GenParams::all_finite() const {
  for (const Mat* m : blocks())
    if (!m->allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------- primitives

Vec log_softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

Vec decode_word_dist(const Mat& Wo, const Vec& h) { return log_softmax(Wo * h).array().exp().matrix(); }

ProfileMemory encode_profile(const std::vector<std::string>& sentences, const Vocabulary& vocab,
                             const ZipfWeights& zipf, const Mat& E) {
  ProfileMemory mem;
  mem.F = Mat::Zero(static_cast<Eigen::Index>(sentences.size()), E.cols());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    std::vector<TokenId> ids;
    std::vector<double> alphas;
    for (TokenId v : vocab.encode(sentences[i])) {
      const TokenId g = to_gen_id(v);
      ids.push_back(g);
      alphas.push_back(zipf.alpha(v));
      mem.F.row(static_cast<Eigen::Index>(i)) += alphas.back() * E.row(g);
    }
    mem.tokens.push_back(std::move(ids));
    mem.alphas.push_back(std::move(alphas));
  }
  return mem;
}

AttendResult attend_step(const Mat& F, const Vec& h, const Vec& x, const Vec& c_prev, const Mat& Wa, const Mat& Wc) {
  if (F.rows() == 0) throw ValidationError("attend_step: empty profile memory");
  AttendResult r;
  r.a = softmax(F * (Wa * h));
  r.c = F.transpose() * r.a;
  Vec cat(c_prev.size() + x.size());
  cat << c_prev, x;
  r.x_hat = (Wc * cat).array().tanh().matrix();
  return r;
}

// ---------------------------------------------------------------- forward / backward

namespace {

struct DecoderCache {
  TokenId in = 0;
  TokenId out = 0;
  Vec cat;    // [c_prev; x], attention only
  Vec x_hat;  // decoder input actually used
  LstmStepCache lstm;
  Vec probs;
  Vec a;       // attention weights
  Vec keys;    // Wa h
};

struct Trace {
  std::vector<LstmStepCache> encoder;
  std::vector<DecoderCache> decoder;
  ProfileMemory memory;
  bool attend = false;
};

// Shared forward pass with teacher forcing. Returns the NLL of target + eos.
class Runner {
 public:
  Runner(const GenParams& p, const Vocabulary& vocab, const ZipfWeights& zipf, GenMode mode)
      : p_(p), vocab_(vocab), zipf_(zipf), mode_(mode) {}

  const LstmParams& source_cell() const { return mode_ == GenMode::lm ? p_.dec : p_.enc; }

  LstmState encode(const std::vector<TokenId>& source, std::vector<LstmStepCache>* caches) const {
    LstmState s = LstmState::zeros(p_.dec.hidden());
    const LstmParams& cell = source_cell();
    for (TokenId t : source) {
      LstmStepCache* k = nullptr;
      if (caches) k = &caches->emplace_back();
      s = cell_step(cell, p_.E.row(t).transpose(), s, k);
    }
    return s;
  }

  bool uses_memory(const std::vector<std::string>& profile) const {
    return mode_ == GenMode::profile_memory && !profile.empty();
  }

  struct StepState {
    LstmState lstm;
    Vec context;  // c_{t-1}
  };

  // One decoder step from input token `in`; fills cache if given and returns log-probabilities.
  Vec step(TokenId in, StepState& st, const ProfileMemory* mem, DecoderCache* cache) const {
    const Vec x = p_.E.row(in).transpose();
    Vec x_hat;
    Vec cat;
    if (mem) {
      cat.resize(st.context.size() + x.size());
      cat << st.context, x;
      x_hat = (p_.Wc * cat).array().tanh().matrix();
    } else {
      x_hat = x;
    }
    LstmStepCache* lk = cache ? &cache->lstm : nullptr;
    st.lstm = cell_step(p_.dec, x_hat, st.lstm, lk);
    const Vec logp = log_softmax(p_.Wo * st.lstm.h);
    if (mem) {
      Vec keys = p_.Wa * st.lstm.h;
      Vec a = softmax(mem->F * keys);
      st.context = mem->F.transpose() * a;
      if (cache) {
        cache->a = std::move(a);
        cache->keys = std::move(keys);
      }
    }
    if (cache) {
      cache->in = in;
      cache->cat = std::move(cat);
      cache->x_hat = std::move(x_hat);
      cache->probs = logp.array().exp().matrix();
    }
    return logp;
  }

  StepState start(const GenSequence& seq, Trace* trace, ProfileMemory& mem_out, bool& attend) const {
    attend = uses_memory(seq.profile);
    if (attend) mem_out = encode_profile(seq.profile, vocab_, zipf_, p_.E);
    StepState st{encode(seq.source, trace ? &trace->encoder : nullptr), Vec()};
    if (attend) st.context = Vec::Zero(p_.E.cols());
    return st;
  }

  double forward(const GenSequence& seq, Trace* trace, std::vector<double>* logps) const {
    ProfileMemory local;
    ProfileMemory& mem = trace ? trace->memory : local;
    bool attend = false;
    StepState st = start(seq, trace, mem, attend);
    if (trace) trace->attend = attend;

    double nll = 0.0;
    TokenId in = kGenEos;
    for (std::size_t t = 0; t <= seq.target.size(); ++t) {
      const TokenId out = t < seq.target.size() ? seq.target[t] : kGenEos;
      DecoderCache* k = nullptr;
      if (trace) {
        k = &trace->decoder.emplace_back();
        k->out = out;
      }
      const Vec logp = step(in, st, attend ? &mem : nullptr, k);
      nll -= logp[out];
      if (logps) logps->push_back(logp[out]);
      in = out;
    }
    return nll;
  }

  void backward(const GenSequence& seq, const Trace& tr, GenParams& g) const {
    const Eigen::Index e = p_.E.cols();
    const Eigen::Index h = p_.dec.hidden();
    LstmState d_next{Vec::Zero(h), Vec::Zero(h)};
    Vec d_context = tr.attend ? Vec::Zero(e) : Vec();
    Mat dF = tr.attend ? Mat::Zero(tr.memory.F.rows(), e) : Mat();
    const Mat& F = tr.memory.F;

    for (auto it = tr.decoder.rbegin(); it != tr.decoder.rend(); ++it) {
      const DecoderCache& k = *it;
      const Vec hs = k.lstm.o.cwiseProduct(k.lstm.tanh_c);
      Vec dlogits = k.probs;
      dlogits[k.out] -= 1.0;
      g.Wo.noalias() += dlogits * hs.transpose();
      Vec dh = p_.Wo.transpose() * dlogits + d_next.h;

      if (tr.attend) {
        // d_context holds dL/dc_t from the following step.
        const Vec da = F * d_context;
        dF.noalias() += k.a * d_context.transpose();
        const Vec de = k.a.cwiseProduct((da.array() - k.a.dot(da)).matrix());
        dF.noalias() += de * k.keys.transpose();
        const Vec dkeys = F.transpose() * de;
        g.Wa.noalias() += dkeys * hs.transpose();
        dh.noalias() += p_.Wa.transpose() * dkeys;
      }

      LstmState d_prev;
      const Vec dx_hat = cell_step_backward(p_.dec, k.lstm, dh, d_next.c, g.dec, d_prev);
      Vec dx;
      if (tr.attend) {
        const Vec du = dx_hat.cwiseProduct((1.0 - k.x_hat.array().square()).matrix());
        g.Wc.noalias() += du * k.cat.transpose();
        const Vec dcat = p_.Wc.transpose() * du;
        d_context = dcat.head(e);
        dx = dcat.tail(e);
      } else {
        dx = dx_hat;
      }
      g.E.row(k.in) += dx.transpose();
      d_next = std::move(d_prev);
    }

    const LstmParams& cell = source_cell();
    LstmParams& cell_grad = mode_ == GenMode::lm ? g.dec : g.enc;
    for (std::size_t s = tr.encoder.size(); s-- > 0;) {
      LstmState d_prev;
      const Vec dx = cell_step_backward(cell, tr.encoder[s], d_next.h, d_next.c, cell_grad, d_prev);
      g.E.row(seq.source[s]) += dx.transpose();
      d_next = std::move(d_prev);
    }

    if (tr.attend) {
      for (std::size_t i = 0; i < tr.memory.tokens.size(); ++i) {
        for (std::size_t j = 0; j < tr.memory.tokens[i].size(); ++j) {
          g.E.row(tr.memory.tokens[i][j]) += tr.memory.alphas[i][j] * dF.row(static_cast<Eigen::Index>(i));
        }
      }
    }
  }

 private:
  const GenParams& p_;
  const Vocabulary& vocab_;
  const ZipfWeights& zipf_;
  GenMode mode_;
};

}  // namespace

// ---------------------------------------------------------------- model

GenerativeModel::GenerativeModel(Vocabulary vocab, GenConfig config, GenParams params)
    : vocab_(std::move(vocab)), zipf_(vocab_), config_(config), params_(std::move(params)) {
  config_.validate();
  const auto K = static_cast<Eigen::Index>(output_size());
  const auto e = static_cast<Eigen::Index>(config_.embed);
  const auto h = static_cast<Eigen::Index>(config_.hidden);
  const GenParams shape = GenParams::zeros(config_.mode, K, e, h);
  const auto want = shape.blocks();
  const auto have = params_.blocks();
  const auto names = GenParams::block_names();
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i]->rows() != have[i]->rows() || want[i]->cols() != have[i]->cols()) {
      throw ValidationError("generative: parameter block " + names[i] + " has inconsistent dimensions");
    }
  }
  if (!params_.all_finite()) throw ValidationError("generative: non-finite parameters");
}

GenerativeModel::GenerativeModel(Vocabulary vocab, GenConfig config)
    : GenerativeModel(vocab, config,
                      GenParams::zeros(config.mode, static_cast<Eigen::Index>(vocab.size() + 1),
                                       static_cast<Eigen::Index>(config.embed),
                                       static_cast<Eigen::Index>(config.hidden))) {
  // Blocks are drawn in declared order so modes sharing a block share its values.
  Rng rng(derive_seed(config_.seed, 100));
  for (Mat* m : params_.blocks()) {
    for (Eigen::Index c = 0; c < m->cols(); ++c)
      for (Eigen::Index r = 0; r < m->rows(); ++r) (*m)(r, c) = rng.uniform(-config_.init_scale, config_.init_scale);
  }
}

GenerativeModel GenerativeModel::zeros(Vocabulary vocab, GenConfig config) {
  auto K = static_cast<Eigen::Index>(vocab.size() + 1);
  GenParams p = GenParams::zeros(config.mode, K, static_cast<Eigen::Index>(config.embed),
                                 static_cast<Eigen::Index>(config.hidden));
  return GenerativeModel(std::move(vocab), config, std::move(p));
}

std::vector<TokenId> GenerativeModel::gen_ids(std::string_view text) const {
  auto ids = vocab_.encode(text);
  for (auto& t : ids) t = to_gen_id(t);
  return ids;
}

std::string GenerativeModel::render(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId g : ids) {
    if (!out.empty()) out.push_back(' ');
    if (g == kGenEos) out += "__eos__";
    else out += vocab_.token(g == kGenUnknown ? kUnknownId : g - 1);
  }
  return out;
}

GenSequence GenerativeModel::make_sequence(const std::vector<std::string>& context,
                                           const std::vector<std::string>& profile, std::string_view reply) const {
  GenSequence seq;
  std::vector<TokenId> history;
  for (const auto& u : context) {
    const auto ids = gen_ids(u);
    history.insert(history.end(), ids.begin(), ids.end());
  }
  if (config_.max_source_tokens > 0 && history.size() > config_.max_source_tokens) {
    history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(config_.max_source_tokens));
  }
  if (config_.mode == GenMode::profile_memory) {
    seq.profile = profile;
  } else {
    for (const auto& s : profile) {
      const auto ids = gen_ids(s);
      seq.source.insert(seq.source.end(), ids.begin(), ids.end());
    }
  }
  seq.source.insert(seq.source.end(), history.begin(), history.end());
  seq.target = gen_ids(reply);
  return seq;
}

double GenerativeModel::nll(const GenSequence& seq) const {
  return Runner(params_, vocab_, zipf_, config_.mode).forward(seq, nullptr, nullptr);
}

double GenerativeModel::nll_and_gradient(const GenSequence& seq, GenParams& grad) const {
  const Runner run(params_, vocab_, zipf_, config_.mode);
  Trace trace;
  const double loss = run.forward(seq, &trace, nullptr);
  run.backward(seq, trace, grad);
  return loss;
}

std::vector<double> GenerativeModel::token_log_probs(const GenSequence& seq) const {
  std::vector<double> out;
  Runner(params_, vocab_, zipf_, config_.mode).forward(seq, nullptr, &out);
  return out;
}

double GenerativeModel::score_candidate(const std::vector<std::string>& context,
                                        const std::vector<std::string>& profile, std::string_view candidate) const {
  const GenSequence seq = make_sequence(context, profile, candidate);
  if (seq.target.empty()) throw ValidationError("score_candidate: empty candidate");
  const auto logps = token_log_probs(seq);
  const double total = std::accumulate(logps.begin(), logps.end() - 1, 0.0);
  return config_.length_normalize ? total / static_cast<double>(seq.target.size()) : total;
}

std::vector<TokenId> GenerativeModel::greedy_decode_ids(const std::vector<std::string>& context,
                                                        const std::vector<std::string>& profile,
                                                        std::size_t max_len) const {
  const GenSequence seq = make_sequence(context, profile, "");
  const Runner run(params_, vocab_, zipf_, config_.mode);
  ProfileMemory mem;
  bool attend = false;
  auto st = run.start(seq, nullptr, mem, attend);
  std::vector<TokenId> out;
  TokenId in = kGenEos;
  while (out.size() < max_len) {
    const Vec logp = run.step(in, st, attend ? &mem : nullptr, nullptr);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logp.size(); ++j)
      if (logp[j] > logp[best]) best = j;
    if (static_cast<TokenId>(best) == kGenEos) break;
    out.push_back(static_cast<TokenId>(best));
    in = static_cast<TokenId>(best);
  }
  return out;
}

std::string GenerativeModel::greedy_decode(const std::vector<std::string>& context,
                                           const std::vector<std::string>& profile, std::size_t max_len) const {
  return render(greedy_decode_ids(context, profile, max_len));
}

// ---------------------------------------------------------------- training

void train_generative(GenerativeModel& model, const std::vector<Example>& examples, GenTrainingLog* log) {
  if (examples.empty()) throw ValidationError("train_generative: empty example list");
  const GenConfig& cfg = model.config();

  std::vector<GenSequence> data;
  data.reserve(examples.size());
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    data.push_back(model.make_sequence(ex.context, ex.profile, ex.gold));
    tokens += data.back().target.size() + 1;
  }

  GenParams grad = model.params();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 200 + epoch));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    double total = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      grad.set_zero();
      const double loss = model.nll_and_gradient(data[order[step]], grad);
      if (!std::isfinite(loss)) {
        throw Error("train_generative: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                    std::to_string(step));
      }
      total += loss;
      const double norm = std::sqrt(grad.squared_norm());
      const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      model.params().axpy(-cfg.learning_rate * scale, grad);
    }
    if (log) log->epoch_nll_per_token.push_back(total / static_cast<double>(tokens));
  }
}

RankResult GenerativeRanker::rank(const Example& example) const {
  std::vector<double> scores;
  scores.reserve(example.candidates.size());
  for (const auto& c : example.candidates) {
    scores.push_back(tokenize(c).empty() ? -std::numeric_limits<double>::infinity()
                                         : model_->score_candidate(example.context, example.profile, c));
  }
  return rank_by_scores(scores);
}

std::string GenerativeRanker::name() const { return std::string(to_string(model_->mode())); }

}  // namespace persona
