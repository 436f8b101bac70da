#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "persona/errors.hpp"
#include "persona/eval.hpp"
#include "persona/rng.hpp"

namespace persona {

double hits_at_1(const Ranker& ranker, const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("hits@1: no examples");
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    const RankResult r = ranker.rank(ex);
    if (!r.entries.empty() && ex.candidates.at(r.top()) == ex.gold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

double perplexity(const GenerativeModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("perplexity: no examples");
  // Extended-precision accumulation keeps rounding from growing with corpus size.
  long double nll = 0.0L;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    const GenSequence seq = model.make_sequence(ex.context, ex.profile, ex.gold);
    for (double lp : model.token_log_probs(seq)) nll -= lp;
    tokens += seq.target.size() + 1;
  }
  return static_cast<double>(std::exp(nll / static_cast<long double>(tokens)));
}

double f1(std::string_view predicted, std::string_view gold) {
  const auto p = tokenize(predicted);
  const auto g = tokenize(gold);
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double mean_f1(const GenerativeModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("f1: no examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    total += f1(model.greedy_decode(ex.context, ex.profile, model.config().max_decode_len), ex.gold);
  }
  return total / static_cast<double>(examples.size());
}

namespace {

std::uint64_t hash_text(std::string_view s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

RankResult RandomRanker::rank(const Example& example) const {
  std::uint64_t base = hash_text(example.episode_id, 1469598103934665603ULL ^ seed_);
  base = hash_text(example.gold, derive_seed(base, example.turn_index));
  std::vector<double> scores(example.candidates.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = static_cast<double>(derive_seed(base, i) >> 11) * 0x1.0p-53;
  }
  return rank_by_scores(scores);
}

RankResult OracleRanker::rank(const Example& example) const {
  std::vector<double> scores(example.candidates.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = example.candidates[i] == example.gold ? 1.0 : 0.0;
  return rank_by_scores(scores);
}

std::vector<Episode> with_sampled_candidates(const std::vector<Episode>& episodes, std::size_t n_distractors,
                                             std::uint64_t seed) {
  std::vector<std::string> pool;
  for (const auto& ep : episodes)
    for (const auto& t : ep.turns)
      if (t.text != kSilenceToken) pool.push_back(t.text);

  std::vector<Episode> out = episodes;
  Rng rng(derive_seed(seed, 300));
  for (auto& ep : out) {
    const bool has_labels = std::any_of(ep.turns.begin(), ep.turns.end(), [](const Turn& t) { return t.labeled(); });
    if (has_labels) continue;
    for (auto& t : ep.turns) {
      if (t.text == kSilenceToken) continue;
      std::vector<std::string> cands;
      std::unordered_set<std::string> seen{t.text};
      for (std::size_t attempt = 0; cands.size() < n_distractors && attempt < 50 * (n_distractors + 1); ++attempt) {
        const std::string& c = pool[rng.index(pool.size())];
        if (seen.insert(c).second) cands.push_back(c);
      }
      const std::size_t at = rng.index(cands.size() + 1);
      cands.insert(cands.begin() + static_cast<std::ptrdiff_t>(at), t.text);
      t.candidates = std::move(cands);
      t.gold_index = at;
    }
  }
  return out;
}

}  // namespace persona
