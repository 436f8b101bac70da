#pragma once

// PersonaChat-style corpora: domain types, the ParlAI-style line ingester,
// canonical JSONL storage, and conditioning-specific example building.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persona {

enum class Variant { original, revised };
enum class Speaker { p0, p1 };
enum class Split { train, valid, test };
enum class ConditioningMode { none, self, their, both };

std::string_view to_string(Variant v);
std::string_view to_string(Speaker s);
std::string_view to_string(Split s);
std::string_view to_string(ConditioningMode m);

// Parsers for the enum spellings above; throw ValidationError on unknown input.
Variant parse_variant(std::string_view s);
Speaker parse_speaker(std::string_view s);
Split parse_split(std::string_view s);
ConditioningMode parse_mode(std::string_view s);

inline Speaker other(Speaker s) { return s == Speaker::p0 ? Speaker::p1 : Speaker::p0; }

struct Persona {
  std::string id;
  Variant variant = Variant::original;
  std::vector<std::string> sentences;

  bool operator==(const Persona&) const = default;
};

struct Turn {
  Speaker speaker = Speaker::p0;
  std::string text;
  std::optional<std::vector<std::string>> candidates;
  std::optional<std::size_t> gold_index;

  bool labeled() const { return candidates.has_value(); }
  bool operator==(const Turn&) const = default;
};

// Both variants of one speaker's persona. Ingested generic dialog files may
// carry neither.
struct SpeakerPersonas {
  std::optional<Persona> original;
  std::optional<Persona> revised;

  const std::optional<Persona>& get(Variant v) const { return v == Variant::original ? original : revised; }
  std::optional<Persona>& get(Variant v) { return v == Variant::original ? original : revised; }
  bool operator==(const SpeakerPersonas&) const = default;
};

struct Episode {
  std::string id;
  Split split = Split::train;
  SpeakerPersonas p0;
  SpeakerPersonas p1;
  std::vector<Turn> turns;

  const SpeakerPersonas& personas(Speaker s) const { return s == Speaker::p0 ? p0 : p1; }
  SpeakerPersonas& personas(Speaker s) { return s == Speaker::p0 ? p0 : p1; }
  const Persona* persona(Speaker s, Variant v) const {
    const auto& p = personas(s).get(v);
    return p ? &*p : nullptr;
  }
  bool operator==(const Episode&) const = default;
};

// One next-utterance classification instance.
struct Example {
  std::vector<std::string> context;
  std::vector<std::string> profile;
  std::string gold;
  std::vector<std::string> candidates;
  // Bookkeeping for harnesses; not part of the task itself.
  std::string episode_id;
  std::size_t turn_index = 0;
  Speaker replier = Speaker::p1;

  std::size_t gold_index() const;
};

struct SplitStats {
  std::size_t n_utterances = 0;
  std::size_t n_episodes = 0;
  bool operator==(const SplitStats&) const = default;
};

struct CorpusStats {
  std::size_t n_utterances = 0;
  std::size_t n_episodes = 0;
  std::size_t n_personas = 0;
  std::map<Split, SplitStats> per_split;
};

// Placeholder the released files use for "partner has not spoken yet".
inline constexpr std::string_view kSilenceToken = "__SILENCE__";
inline constexpr std::size_t kDefaultCandidates = 20;

CorpusStats compute_stats(const std::vector<Episode>& episodes);

// Throws ValidationError naming the episode id on the first violated invariant.
// expected_candidates == 0 disables the candidate-count check.
void validate(const Episode& ep, std::size_t expected_candidates = kDefaultCandidates);

// Stable identifier derived from persona content (FNV-1a over the sentences).
std::string persona_content_id(const std::vector<std::string>& sentences);

// ---------------------------------------------------------------- ingestion

struct ParseOptions {
  bool expect_candidates = false;
  Split split = Split::train;
  Variant variant = Variant::original;
  std::string id_prefix = "ep";
};

struct Diagnostic {
  std::size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<Episode> episodes;
  std::vector<Diagnostic> diagnostics;
};

// Reads the `<n> <payload>` line format. A malformed line drops the episode it
// belongs to; parsing resumes at the next line numbered 1.
ParseResult parse_dialog_file(std::istream& in, const ParseOptions& opts = {});

// Attaches the personas of `revised` episodes (same file order) as the revised
// variant of `original`, carrying over the original persona ids.
void merge_revised(std::vector<Episode>& original, const std::vector<Episode>& revised);

// ---------------------------------------------------------------- canonical JSONL

inline constexpr int kCanonicalVersion = 1;

std::string write_canonical(const std::vector<Episode>& episodes);
void write_canonical(std::ostream& out, const std::vector<Episode>& episodes);
std::vector<Episode> load_canonical(std::istream& in);
std::vector<Episode> load_canonical_file(const std::string& path);
void write_canonical_file(const std::string& path, const std::vector<Episode>& episodes);

// ---------------------------------------------------------------- examples

struct ExampleOptions {
  ConditioningMode mode = ConditioningMode::none;
  Variant variant = Variant::original;
  // Restrict to turns spoken by this speaker; every labeled turn otherwise.
  std::optional<Speaker> side;
};

std::vector<Example> build_examples(const std::vector<Episode>& episodes, const ExampleOptions& opts);

std::vector<Episode> filter_split(const std::vector<Episode>& episodes, Split split);

// Distinct personas of one variant, ordered by first appearance.
std::vector<Persona> collect_personas(const std::vector<Episode>& episodes, Variant variant = Variant::original);

}  // namespace persona
