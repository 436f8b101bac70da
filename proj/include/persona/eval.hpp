#pragma once

// Evaluation: hits@1 / perplexity / F1, the conditioning-matrix harness, and
// the profile-prediction experiment (who is speaking, judged from their
// utterances).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/generative.hpp"
#include "persona/rankers.hpp"

namespace persona {

// ---------------------------------------------------------------- metrics

double hits_at_1(const Ranker& ranker, const std::vector<Example>& examples);

// exp(total NLL / total gold tokens), end-of-sequence counted.
double perplexity(const GenerativeModel& model, const std::vector<Example>& examples);

// Token-multiset overlap F1 after tokenization; 0 when either side is empty.
double f1(std::string_view predicted, std::string_view gold);

// Mean F1 of greedy decodes against the gold replies.
double mean_f1(const GenerativeModel& model, const std::vector<Example>& examples);

// Scores every candidate with a seeded hash of (example, candidate): a
// uniform random ranker that is reproducible regardless of call order.
class RandomRanker : public Ranker {
 public:
  explicit RandomRanker(std::uint64_t seed) : seed_(seed) {}
  RankResult rank(const Example& example) const override;
  std::string name() const override { return "random"; }

 private:
  std::uint64_t seed_;
};

// Scores the gold 1 and everything else 0.
class OracleRanker : public Ranker {
 public:
  RankResult rank(const Example& example) const override;
  std::string name() const override { return "oracle"; }
};

// Gives every turn of episodes that carry no candidate sets `n_distractors`
// distractors sampled from other turns of the corpus (seeded). Episodes that
// already have candidates are returned unchanged.
std::vector<Episode> with_sampled_candidates(const std::vector<Episode>& episodes, std::size_t n_distractors,
                                             std::uint64_t seed);

// ---------------------------------------------------------------- conditioning matrix

struct CellKey {
  std::string model;
  Variant train_variant = Variant::original;
  ConditioningMode mode = ConditioningMode::none;
  Variant variant = Variant::original;

  bool operator==(const CellKey&) const = default;
};

struct ModelSlot {
  std::shared_ptr<const Ranker> ranker;
  std::shared_ptr<const GenerativeModel> generative;  // set for generative models
};

// Returns nullopt when no model exists for the cell.
using ModelProvider = std::function<std::optional<ModelSlot>(const CellKey&)>;

struct EvalConfig {
  std::size_t n_distractors = 19;
  std::vector<std::string> models;
  std::vector<ConditioningMode> modes = {ConditioningMode::none, ConditioningMode::self};
  std::vector<Variant> variants = {Variant::original};
  std::vector<Variant> train_variants = {Variant::original};
  std::optional<Speaker> side;
  std::uint64_t seed = 7;

  void validate() const;
};

struct ReportRow {
  CellKey key;
  bool empty = false;
  std::size_t n = 0;
  std::optional<double> hits_at_1;
  std::optional<double> perplexity;
  std::optional<double> f1;
};

struct EvalReport {
  std::vector<ReportRow> rows;

  const ReportRow* find(const CellKey& key) const;
  // Rows are models; column groups are persona conditions.
  std::string to_table() const;
  // One object per (cell, metric): model, train_variant, mode, variant, metric, value, n.
  std::string to_jsonl() const;
};

EvalReport run_matrix(const std::vector<Episode>& episodes, const ModelProvider& models, const EvalConfig& config,
                      std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------- profile prediction

enum class ProfileLevel { profile, sentence };

std::string_view to_string(ProfileLevel l);
ProfileLevel parse_profile_level(std::string_view s);

struct ProfilePredConfig {
  std::size_t n_negatives = 100;
  ProfileLevel level = ProfileLevel::profile;
  Speaker speaker = Speaker::p0;  // whose utterances are observed
  Speaker target = Speaker::p0;   // whose profile is predicted
  Variant variant = Variant::original;
  std::size_t max_length = 8;
  std::uint64_t seed = 7;

  void validate() const;
};

struct ProfilePredResult {
  std::size_t n_dialogues = 0;
  // Expected top-1 miss rate under uniformly random tie-breaking.
  double error_rate = 0.0;
  // Expected 1-based rank of the true profile, same tie rule.
  double mean_rank = 0.0;
  // error_by_length[n-1]: using only the speaker's first n utterances.
  std::vector<double> error_by_length;
};

ProfilePredResult profile_prediction(const std::vector<Episode>& dialogues, const std::vector<Persona>& pool,
                                     const ProfilePredConfig& config);

}  // namespace persona
