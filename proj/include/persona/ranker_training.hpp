#pragma once

// SGD training of the shared embedding table under the hinge-of-cosine
// margin ranking objective, with optional profile attention in the query.

#include <cstdint>
#include <vector>

#include "persona/rankers.hpp"

namespace persona {

struct TrainConfig {
  std::size_t dim = 100;
  double margin = 0.2;
  std::size_t negatives = 10;
  double learning_rate = 0.05;
  std::size_t epochs = 20;
  std::uint64_t seed = 7;
  int hops = 1;
  double init_scale = 0.1;
  // Off unless set: L2 shrinkage on touched rows, and lr / (1 + decay * epoch).
  double l2 = 0.0;
  double lr_decay = 0.0;

  void validate() const;
};

// One positive with a fixed set of negatives, already mapped to token ids.
struct RankingInstance {
  std::vector<TokenId> query;                 // context (+ profile for the plain ranker)
  std::vector<std::vector<TokenId>> profile;  // attended sentences; empty for the plain ranker
  std::vector<TokenId> positive;
  std::vector<std::vector<TokenId>> negatives;
};

struct ObjectiveOptions {
  double margin = 0.2;
  bool profile_attention = false;
  int hops = 1;
};

// Loss of one instance under W.
double ranking_loss(const Mat& W, const RankingInstance& inst, const ObjectiveOptions& opts);

// Loss plus its analytic gradient, accumulated (+=) into grad (same shape as W).
double ranking_loss_and_gradient(const Mat& W, const RankingInstance& inst, const ObjectiveOptions& opts, Mat& grad);

// Maps an example to token ids. The plain ranker folds the profile into the
// query; the attention ranker keeps the sentences apart.
RankingInstance make_instance(const Example& ex, const Vocabulary& vocab, bool profile_attention);

struct TrainingLog {
  std::vector<double> epoch_loss;  // mean loss per example
};

EmbeddingMatrix train_ranker(const std::vector<Example>& examples, const Vocabulary& vocab, const TrainConfig& config,
                             bool use_profile_attention, TrainingLog* log = nullptr);

}  // namespace persona
