#include "persona/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>

#include "persona/errors.hpp"
#include "persona/rng.hpp"
#include "persona/textrep.hpp"

namespace persona {

namespace {

const std::unordered_set<std::string_view>& stopword_set() {
  static const std::unordered_set<std::string_view> words = {
      "i",    "my",   "a",     "an",   "the",   "is",    "am",    "are",  "to",    "of",   "and",
      "with", "in",   "on",    "for",  "you",   "it",    "that",  "me",   "do",    "what", "about",
      "so",   "too",  "yes",   "well", "really", "also", "oh",    "hi",   "how",   "hey",  "lot",
      "was",  "be",   "at",    "as",   "we",    "your",  "this",  "very", "just",  "lately", "think",
      "much", "sure", "cool",  "nice", "thing", "great", "tell",  "more", "all",   "there", "here",
      ".",    ",",    "!",     "?",    ";",     ":",     "'",     "\"",   "(",     ")"};
  return words;
}

// Template verbs and their revised counterparts. Targets never appear as sources.
const std::map<std::string_view, std::string_view>& synonym_table() {
  static const std::map<std::string_view, std::string_view> table = {
      {"like", "enjoy"},       {"have", "own"},        {"favorite", "preferred"}, {"work", "toil"},
      {"collect", "gather"},   {"visit", "frequent"},  {"love", "adore"},         {"play", "practice"},
      {"study", "research"},   {"cook", "prepare"},    {"drive", "pilot"},        {"grew", "matured"},
      {"near", "beside"},      {"dream", "fantasize"}, {"fear", "dread"},         {"hobby", "pastime"},
      {"skiing", "sledding"},  {"alpha", "primary"},   {"hate", "loathe"},        {"live", "reside"},
  };
  return table;
}

struct TraitTemplate {
  std::string_view prefix;  // persona sentence: prefix + " " + a + " " + b
};

constexpr std::array<TraitTemplate, 10> kTemplates = {{
    {"i like"},
    {"i have a"},
    {"my favorite hobby is"},
    {"i work with"},
    {"i collect"},
    {"i visit"},
    {"i love"},
    {"i play"},
    {"i study"},
    {"i dream about"},
}};

constexpr std::array<std::string_view, 6> kOpeners = {"", "well ,", "oh ,", "yes ,", "hi !", "hey ,"};
constexpr std::array<std::string_view, 5> kClosers = {".", "what about you ?", "do you ?", "how about you ?", "!"};

// Persona-free replies, built only from words no persona sentence uses.
constexpr std::array<std::string_view, 6> kSmallTalk = {
    "oh , how are you ?",  "cool , tell me more .",     "yes , me too !",
    "well , that was so nice .", "hey there , how are you ?", "sure , what do you do ?"};

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string pseudo_word(std::uint64_t bits, std::size_t syllables) {
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w.push_back(kConsonants[bits % kConsonants.size()]);
    bits /= kConsonants.size();
    w.push_back(kVowels[bits % kVowels.size()]);
    bits /= kVowels.size();
  }
  return w;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t salt) {
  std::uint64_t h = 1469598103934665603ULL ^ (salt * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct Trait {
  std::string prefix;
  std::string a;
  std::string b;
  std::string sentence() const { return prefix + " " + a + " " + b; }
};

std::string join_nonempty(std::initializer_list<std::string_view> parts) {
  std::string out;
  for (auto p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(p);
  }
  return out;
}

std::string make_utterance(const Trait& t, Rng& rng) {
  const auto opener = kOpeners[rng.index(kOpeners.size())];
  const auto closer = kClosers[rng.index(kClosers.size())];
  const std::string ab = t.a + " " + t.b;
  std::string body;
  switch (rng.index(3)) {
    case 0: body = t.prefix + " " + ab; break;
    case 1: body = ab + " is my thing"; break;
    default: body = "lately i think about " + ab + " a lot"; break;
  }
  return join_nonempty({opener, body, closer});
}

}  // namespace

bool is_stopword(std::string_view token) { return stopword_set().contains(token); }

std::string revise_sentence(std::string_view sentence) {
  const auto tokens = tokenize(sentence);
  const std::set<std::string> original(tokens.begin(), tokens.end());
  std::string out;
  for (const auto& tok : tokens) {
    std::string replacement = tok;
    if (!is_stopword(tok)) {
      const auto& table = synonym_table();
      auto it = table.find(tok);
      if (it != table.end() && !original.contains(std::string(it->second))) {
        replacement = std::string(it->second);
      } else {
        for (std::uint64_t salt = 0;; ++salt) {
          replacement = pseudo_word(fnv1a(tok, salt), 3);
          if (!original.contains(replacement) && !is_stopword(replacement)) break;
        }
      }
    }
    if (!out.empty()) out.push_back(' ');
    out += replacement;
  }
  return out;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_personas < 1 || cfg.n_traits < 1 || cfg.n_episodes < 1 || cfg.turns_per_episode < 1) {
    throw ValidationError("synthetic: all counts must be >= 1");
  }
  if (cfg.n_candidates < 2) throw ValidationError("synthetic: n_candidates must be >= 2");
  if (cfg.n_personas < 3) {
    throw ValidationError("synthetic: trait pool too small; distractors need at least one persona outside each dialogue");
  }
  if (!(cfg.trait_rate >= 0.0 && cfg.trait_rate <= 1.0)) throw ValidationError("synthetic: trait_rate must be in [0, 1]");
  if (cfg.turns_per_episode < 2) throw ValidationError("synthetic: turns_per_episode must be >= 2");
  const std::size_t words_needed = cfg.n_personas * cfg.n_traits * 2;
  constexpr std::size_t kWordSpace = 70 * 70 * 70;
  if (words_needed > kWordSpace / 4) throw ValidationError("synthetic: trait pool too small for requested personas");

  Rng rng(cfg.seed);
  SyntheticCorpus corpus;

  // Trait words are globally unique so no distractor can mention a speaker's trait.
  std::unordered_set<std::string> used;
  for (const auto& [k, v] : synonym_table()) {
    used.emplace(k);
    used.emplace(v);
  }
  auto fresh_word = [&] {
    while (true) {
      std::string w = pseudo_word(rng.next(), 3);
      if (!is_stopword(w) && used.insert(w).second) return w;
    }
  };

  std::vector<std::vector<Trait>> traits(cfg.n_personas);
  corpus.trait_words.resize(cfg.n_personas);
  for (std::size_t p = 0; p < cfg.n_personas; ++p) {
    Persona orig;
    Persona rev;
    char buf[32];
    std::snprintf(buf, sizeof buf, "persona-s%04zu", p);
    orig.id = rev.id = buf;
    orig.variant = Variant::original;
    rev.variant = Variant::revised;
    for (std::size_t t = 0; t < cfg.n_traits; ++t) {
      Trait tr{std::string(kTemplates[(p + t) % kTemplates.size()].prefix), fresh_word(), fresh_word()};
      corpus.trait_words[p].insert(tr.a);
      corpus.trait_words[p].insert(tr.b);
      orig.sentences.push_back(tr.sentence());
      rev.sentences.push_back(revise_sentence(tr.sentence()));
      traits[p].push_back(std::move(tr));
    }
    corpus.personas.push_back(std::move(orig));
    corpus.revised.push_back(std::move(rev));
  }

  const std::size_t train_end = cfg.n_episodes * 8 / 10;
  const std::size_t valid_end = cfg.n_episodes * 9 / 10;

  for (std::size_t e = 0; e < cfg.n_episodes; ++e) {
    Episode ep;
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth-%06zu", e + 1);
    ep.id = buf;
    ep.split = e < train_end ? Split::train : (e < valid_end ? Split::valid : Split::test);

    const std::size_t a = rng.index(cfg.n_personas);
    std::size_t b = rng.index(cfg.n_personas - 1);
    if (b >= a) ++b;
    const std::array<std::size_t, 2> who = {a, b};
    ep.p0.original = corpus.personas[a];
    ep.p0.revised = corpus.revised[a];
    ep.p1.original = corpus.personas[b];
    ep.p1.revised = corpus.revised[b];

    for (std::size_t t = 0; t < cfg.turns_per_episode; ++t) {
      const std::size_t speaker_persona = who[t % 2];
      Turn turn;
      turn.speaker = t % 2 == 0 ? Speaker::p0 : Speaker::p1;
      const auto& own = traits[speaker_persona];
      // the draw is skipped at rate 1 so default corpora stay unchanged
      if (cfg.trait_rate < 1.0 && rng.unit() >= cfg.trait_rate) {
        turn.text = kSmallTalk[rng.index(kSmallTalk.size())];
      } else {
        turn.text = make_utterance(own[rng.index(own.size())], rng);
      }

      std::vector<std::string> cands;
      cands.reserve(cfg.n_candidates);
      std::unordered_set<std::string> seen{turn.text};
      while (cands.size() + 1 < cfg.n_candidates) {
        std::size_t q = rng.index(cfg.n_personas);
        if (q == a || q == b) continue;
        const auto& pool = traits[q];
        std::string d = make_utterance(pool[rng.index(pool.size())], rng);
        if (seen.insert(d).second) cands.push_back(std::move(d));
      }
      const std::size_t gold_at = rng.index(cfg.n_candidates);
      cands.insert(cands.begin() + static_cast<std::ptrdiff_t>(gold_at), turn.text);
      turn.candidates = std::move(cands);
      turn.gold_index = gold_at;
      ep.turns.push_back(std::move(turn));
    }
    corpus.episodes.push_back(std::move(ep));
  }
  return corpus;
}

}  // namespace persona
