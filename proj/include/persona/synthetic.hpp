#pragma once

// Desk-scale stand-in for a persona dialogue corpus. Every persona owns a
// private pool of trait words, replies mention their speaker's traits
// (always, by default) and distractors come from personas outside the
// conversation, so conditioning on the persona is informative by construction.

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "persona/corpus.hpp"

namespace persona {

struct SyntheticConfig {
  std::size_t n_personas = 20;
  std::size_t n_traits = 5;
  std::size_t n_episodes = 200;
  std::size_t turns_per_episode = 8;
  std::size_t n_candidates = kDefaultCandidates;
  // Share of replies that mention a trait; the rest are persona-free small talk.
  double trait_rate = 1.0;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<Episode> episodes;
  std::vector<Persona> personas;  // original variant, index = persona ordinal
  std::vector<Persona> revised;   // same order as `personas`
  // trait_words[i] = every trait token owned by persona i
  std::vector<std::unordered_set<std::string>> trait_words;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

// Function words, punctuation and generator filler; ignored by the
// revision no-overlap rule.
bool is_stopword(std::string_view token);

// Replaces every non-stopword token with a synonym that does not occur in the
// input sentence. Template verbs use a fixed table; other words map to a
// deterministic pseudo-word derived from their spelling.
std::string revise_sentence(std::string_view sentence);

}  // namespace persona
