#include <algorithm>
#include <unordered_set>

#include "persona/errors.hpp"
#include "persona/eval.hpp"
#include "persona/rng.hpp"

namespace persona {

std::string_view to_string(ProfileLevel l) { return l == ProfileLevel::profile ? "profile" : "sentence"; }

ProfileLevel parse_profile_level(std::string_view s) {
  if (s == "profile") return ProfileLevel::profile;
  if (s == "sentence") return ProfileLevel::sentence;
  throw ValidationError("unknown level '" + std::string(s) + "' (expected profile or sentence)");
}

void ProfilePredConfig::validate() const {
  if (n_negatives < 1) throw ValidationError("profile prediction: n_negatives must be >= 1");
  if (max_length < 1) throw ValidationError("profile prediction: max_length must be >= 1");
}

namespace {

struct Scorer {
  const Vocabulary& vocab;
  const IdfTable& idf;
  ProfileLevel level;

  double operator()(const SparseVector& utterances, const Persona& p) const {
    if (level == ProfileLevel::profile) {
      std::string joined;
      for (const auto& s : p.sentences) joined += s + " ";
      return cosine(utterances, tfidf_vector(joined, vocab, idf));
    }
    if (p.sentences.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : p.sentences) total += cosine(utterances, tfidf_vector(s, vocab, idf));
    return total / static_cast<double>(p.sentences.size());
  }
};

struct Outcome {
  double error;
  double rank;
};

// Expected outcome when ties are broken uniformly at random. Exact equality
// is intended: disjoint bags score exactly 0.
Outcome judge(double truth, const std::vector<double>& negatives) {
  std::size_t above = 0, tied = 0;
  for (double s : negatives) {
    if (s > truth) ++above;
    else if (s == truth) ++tied;
  }
  const double error = above > 0 ? 1.0 : 1.0 - 1.0 / static_cast<double>(tied + 1);
  const double rank = 1.0 + static_cast<double>(above) + static_cast<double>(tied) / 2.0;
  return {error, rank};
}

}  // namespace

ProfilePredResult profile_prediction(const std::vector<Episode>& dialogues, const std::vector<Persona>& pool,
                                     const ProfilePredConfig& config) {
  config.validate();

  std::vector<std::vector<std::string>> docs;
  for (const auto& ep : dialogues)
    for (const auto& t : ep.turns)
      if (t.text != kSilenceToken) docs.push_back(tokenize(t.text));
  for (const auto& p : pool)
    for (const auto& s : p.sentences) docs.push_back(tokenize(s));
  const Vocabulary vocab = Vocabulary::build(docs);
  const IdfTable idf(vocab);
  const Scorer score{vocab, idf, config.level};

  ProfilePredResult result;
  result.error_by_length.assign(config.max_length, 0.0);
  double error_sum = 0.0, rank_sum = 0.0;

  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    const Episode& ep = dialogues[d];
    const Persona* truth = ep.persona(config.target, config.variant);
    if (!truth) continue;
    std::vector<std::string> utterances;
    for (const auto& t : ep.turns)
      if (t.speaker == config.speaker && t.text != kSilenceToken) utterances.push_back(t.text);
    if (utterances.empty()) continue;

    std::vector<const Persona*> others;
    for (const auto& p : pool)
      if (p.id != truth->id && p.sentences != truth->sentences) others.push_back(&p);
    if (others.size() < config.n_negatives) {
      throw ValidationError("profile prediction: pool has " + std::to_string(others.size()) +
                            " personas besides the true one, need " + std::to_string(config.n_negatives));
    }
    Rng rng(derive_seed(config.seed, d));
    rng.shuffle(others);
    others.resize(config.n_negatives);

    auto evaluate = [&](std::size_t n) {
      std::string bag;
      for (std::size_t i = 0; i < n; ++i) bag += utterances[i] + " ";
      const SparseVector q = tfidf_vector(bag, vocab, idf);
      std::vector<double> neg;
      neg.reserve(others.size());
      for (const Persona* p : others) neg.push_back(score(q, *p));
      return judge(score(q, *truth), neg);
    };

    const Outcome full = evaluate(utterances.size());
    error_sum += full.error;
    rank_sum += full.rank;
    for (std::size_t n = 1; n <= config.max_length; ++n) {
      result.error_by_length[n - 1] += evaluate(std::min(n, utterances.size())).error;
    }
    ++result.n_dialogues;
  }

  if (result.n_dialogues == 0) throw ValidationError("profile prediction: no dialogues with the target persona");
  const auto n = static_cast<double>(result.n_dialogues);
  result.error_rate = error_sum / n;
  result.mean_rank = rank_sum / n;
  for (double& e : result.error_by_length) e /= n;
  return result;
}

}  // namespace persona
