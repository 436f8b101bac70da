#pragma once

// Generative next-utterance models: LSTM encoder-decoder (persona prepended
// to the input), decoder-only language model, and the generative profile
// memory network whose decoder attends over Zipf-weighted persona sentences.
// Trained by NLL with hand-written backprop; also used as candidate rankers.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/lstm.hpp"
#include "persona/rankers.hpp"
#include "persona/textrep.hpp"

namespace persona {

enum class GenMode { seq2seq, lm, profile_memory };

std::string_view to_string(GenMode m);
GenMode parse_gen_mode(std::string_view s);

// Generative index space: 0 = unknown, 1 = end-of-sequence (also the
// start symbol), vocabulary word i >= 1 sits at i + 1.
inline constexpr TokenId kGenUnknown = 0;
inline constexpr TokenId kGenEos = 1;

inline TokenId to_gen_id(TokenId vocab_id) { return vocab_id == kUnknownId ? kGenUnknown : vocab_id + 1; }

struct GenConfig {
  GenMode mode = GenMode::seq2seq;
  std::size_t hidden = 64;
  std::size_t embed = 64;
  double learning_rate = 0.5;
  std::size_t epochs = 30;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;
  double init_scale = 0.1;
  std::size_t max_decode_len = 15;
  // Source side keeps only the most recent tokens.
  std::size_t max_source_tokens = 64;
  bool length_normalize = false;

  void validate() const;
};

struct GenParams {
  Mat E;           // K x e input embeddings
  LstmParams enc;  // empty in lm mode
  LstmParams dec;
  Mat Wo;  // K x h output projection, row j = w_j
  Mat Wa;  // e x h, profile_memory only
  Mat Wc;  // e x 2e, profile_memory only

  static GenParams zeros(GenMode mode, Eigen::Index vocab, Eigen::Index embed, Eigen::Index hidden);

  // Fixed declared order, used for initialization, clipping and model files.
  std::vector<Mat*> blocks();
  std::vector<const Mat*> blocks() const;
  static std::vector<std::string> block_names();

  double squared_norm() const;
  void scale(double s);
  // this += s * other
  void axpy(double s, const GenParams& other);
  void set_zero();
  bool all_finite() const;
};

// Row i = sum_j alpha(token_j) * E[token_j].
struct ProfileMemory {
  Mat F;  // n x e
  std::vector<std::vector<TokenId>> tokens;  // generative ids per row
  std::vector<std::vector<double>> alphas;

  Eigen::Index rows() const { return F.rows(); }
};

ProfileMemory encode_profile(const std::vector<std::string>& sentences, const Vocabulary& vocab,
                             const ZipfWeights& zipf, const Mat& E);

// softmax(Wo h), log-sum-exp stabilized.
Vec decode_word_dist(const Mat& Wo, const Vec& h);
Vec log_softmax(const Vec& logits);

struct AttendResult {
  Vec a;      // softmax(F Wa h)
  Vec c;      // a^T F
  Vec x_hat;  // tanh(Wc [c_prev; x])
};

AttendResult attend_step(const Mat& F, const Vec& h, const Vec& x, const Vec& c_prev, const Mat& Wa, const Mat& Wc);

// One training/scoring instance in generative ids.
struct GenSequence {
  std::vector<TokenId> source;                // encoder input (or lm prefix)
  std::vector<std::string> profile;           // memory sentences (profile_memory mode)
  std::vector<TokenId> target;                // reply tokens, without end-of-sequence
};

class GenerativeModel {
 public:
  // Random initialization from config.seed.
  GenerativeModel(Vocabulary vocab, GenConfig config);
  // All parameters zero: every step predicts the uniform distribution.
  static GenerativeModel zeros(Vocabulary vocab, GenConfig config);
  GenerativeModel(Vocabulary vocab, GenConfig config, GenParams params);

  const GenConfig& config() const { return config_; }
  GenMode mode() const { return config_.mode; }
  const Vocabulary& vocab() const { return vocab_; }
  const ZipfWeights& zipf() const { return zipf_; }
  const GenParams& params() const { return params_; }
  GenParams& params() { return params_; }
  std::size_t output_size() const { return vocab_.size() + 1; }

  std::vector<TokenId> gen_ids(std::string_view text) const;
  std::string render(const std::vector<TokenId>& ids) const;

  // Packs context/profile/reply according to the mode: seq2seq and lm prepend
  // the profile to the source, profile_memory keeps it as memory.
  GenSequence make_sequence(const std::vector<std::string>& context, const std::vector<std::string>& profile,
                            std::string_view reply) const;

  // Total NLL in nats over target tokens plus the closing end-of-sequence.
  double nll(const GenSequence& seq) const;
  double nll_and_gradient(const GenSequence& seq, GenParams& grad) const;
  // Per-position log p(target_t); the last entry is the end-of-sequence.
  std::vector<double> token_log_probs(const GenSequence& seq) const;

  // Sum of candidate-token log probabilities (end-of-sequence excluded),
  // divided by length when config().length_normalize is set.
  double score_candidate(const std::vector<std::string>& context, const std::vector<std::string>& profile,
                         std::string_view candidate) const;

  std::vector<TokenId> greedy_decode_ids(const std::vector<std::string>& context,
                                         const std::vector<std::string>& profile, std::size_t max_len) const;
  std::string greedy_decode(const std::vector<std::string>& context, const std::vector<std::string>& profile,
                            std::size_t max_len) const;

 private:
  Vocabulary vocab_;
  ZipfWeights zipf_;
  GenConfig config_;
  GenParams params_;
};

struct GenTrainingLog {
  std::vector<double> epoch_nll_per_token;
};

// Per-example SGD with teacher forcing and global-norm clipping.
void train_generative(GenerativeModel& model, const std::vector<Example>& examples, GenTrainingLog* log = nullptr);

// Ranks candidates by score_candidate.
class GenerativeRanker : public Ranker {
 public:
  explicit GenerativeRanker(std::shared_ptr<const GenerativeModel> model) : model_(std::move(model)) {}
  RankResult rank(const Example& example) const override;
  std::string name() const override;
  const GenerativeModel& model() const { return *model_; }

 private:
  std::shared_ptr<const GenerativeModel> model_;
};

// Binary PGEN file; the vocabulary lives next to it in `<path>.vocab`.
void save_generative(const std::string& path, const GenerativeModel& model);
std::unique_ptr<GenerativeModel> load_generative(const std::string& path);

// Optional pretrained vectors: one token followed by `embed` numbers per line.
// Rows for tokens found are overwritten; returns the number of rows loaded.
std::size_t load_text_vectors(GenerativeModel& model, const std::string& path);

}  // namespace persona
