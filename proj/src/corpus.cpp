#include "persona/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <set>
#include <sstream>

#include "persona/errors.hpp"
#include "persona/textrep.hpp"

namespace persona {

std::string_view to_string(Variant v) { return v == Variant::original ? "original" : "revised"; }
std::string_view to_string(Speaker s) { return s == Speaker::p0 ? "p0" : "p1"; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

std::string_view to_string(ConditioningMode m) {
  switch (m) {
    case ConditioningMode::none: return "none";
    case ConditioningMode::self: return "self";
    case ConditioningMode::their: return "their";
    case ConditioningMode::both: return "both";
  }
  return "none";
}

Variant parse_variant(std::string_view s) {
  if (s == "original") return Variant::original;
  if (s == "revised") return Variant::revised;
  throw ValidationError("unknown persona variant '" + std::string(s) + "'");
}

Speaker parse_speaker(std::string_view s) {
  if (s == "p0") return Speaker::p0;
  if (s == "p1") return Speaker::p1;
  throw ValidationError("unknown speaker '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

ConditioningMode parse_mode(std::string_view s) {
  if (s == "none") return ConditioningMode::none;
  if (s == "self") return ConditioningMode::self;
  if (s == "their") return ConditioningMode::their;
  if (s == "both") return ConditioningMode::both;
  throw ValidationError("unknown conditioning mode '" + std::string(s) + "'");
}

std::size_t Example::gold_index() const {
  auto it = std::find(candidates.begin(), candidates.end(), gold);
  if (it == candidates.end()) throw ValidationError("example " + episode_id + ": gold not among candidates");
  return static_cast<std::size_t>(it - candidates.begin());
}

CorpusStats compute_stats(const std::vector<Episode>& episodes) {
  CorpusStats stats;
  std::set<std::string> persona_ids;
  for (const auto& ep : episodes) {
    const auto n = static_cast<std::size_t>(std::count_if(
        ep.turns.begin(), ep.turns.end(), [](const Turn& t) { return t.text != kSilenceToken; }));
    auto& s = stats.per_split[ep.split];
    s.n_utterances += n;
    s.n_episodes += 1;
    stats.n_utterances += n;
    stats.n_episodes += 1;
    for (Speaker sp : {Speaker::p0, Speaker::p1}) {
      if (const auto* p = ep.persona(sp, Variant::original)) persona_ids.insert(p->id);
    }
  }
  stats.n_personas = persona_ids.size();
  return stats;
}

std::string persona_content_id(const std::vector<std::string>& sentences) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& s : sentences) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= '\n';
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "persona-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

[[noreturn]] void fail(const Episode& ep, const std::string& what) {
  throw ValidationError("episode " + (ep.id.empty() ? std::string("<no id>") : ep.id) + ": " + what);
}

void validate_persona(const Episode& ep, const Persona& p, Variant expected) {
  if (p.id.empty()) fail(ep, "persona without id");
  if (p.variant != expected) fail(ep, "persona " + p.id + " stored under the wrong variant");
  if (p.sentences.empty()) fail(ep, "persona " + p.id + " has no sentences");
  for (const auto& s : p.sentences) {
    if (tokenize(s).empty()) fail(ep, "persona " + p.id + " has an empty sentence");
  }
}

}  // namespace

void validate(const Episode& ep, std::size_t expected_candidates) {
  if (ep.id.empty()) fail(ep, "missing id");
  if (ep.turns.size() < 2) fail(ep, "fewer than 2 turns");
  for (std::size_t i = 0; i < ep.turns.size(); ++i) {
    const Turn& t = ep.turns[i];
    const Speaker expected = i % 2 == 0 ? Speaker::p0 : Speaker::p1;
    if (t.speaker != expected) fail(ep, "turn " + std::to_string(i) + " breaks speaker alternation");
    if (t.candidates.has_value() != t.gold_index.has_value()) {
      fail(ep, "turn " + std::to_string(i) + " has candidates without gold_index or vice versa");
    }
    if (t.candidates) {
      if (*t.gold_index >= t.candidates->size()) fail(ep, "turn " + std::to_string(i) + " gold_index out of range");
      if ((*t.candidates)[*t.gold_index] != t.text) {
        fail(ep, "turn " + std::to_string(i) + " gold candidate differs from turn text");
      }
      if (expected_candidates != 0 && t.candidates->size() != expected_candidates) {
        fail(ep, "turn " + std::to_string(i) + " has " + std::to_string(t.candidates->size()) + " candidates, expected " +
                     std::to_string(expected_candidates));
      }
    }
  }
  for (Speaker sp : {Speaker::p0, Speaker::p1}) {
    const auto& ps = ep.personas(sp);
    if (ps.original) validate_persona(ep, *ps.original, Variant::original);
    if (ps.revised) validate_persona(ep, *ps.revised, Variant::revised);
    if (ps.original && ps.revised) {
      if (ps.original->id != ps.revised->id) fail(ep, "revised persona id differs from original");
      if (ps.original->sentences == ps.revised->sentences) fail(ep, "revised persona identical to original");
    }
  }
}

// ---------------------------------------------------------------- ingestion

namespace {

constexpr std::string_view kYourPersona = "your persona:";
constexpr std::string_view kPartnerPersona = "partner's persona:";

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

class EpisodeAssembler {
 public:
  EpisodeAssembler(const ParseOptions& opts, ParseResult& result) : opts_(opts), result_(result) {}

  void start(std::size_t line) {
    finish();
    ++ordinal_;
    open_ = true;
    broken_ = false;
    start_line_ = line;
    last_number_ = 0;
    p0_.clear();
    p1_.clear();
    turns_.clear();
  }

  bool open() const { return open_; }
  bool broken() const { return broken_; }
  std::size_t last_number() const { return last_number_; }
  void set_number(std::size_t n) { last_number_ = n; }

  void abort(std::size_t line, std::string message) {
    result_.diagnostics.push_back({line, std::move(message)});
    broken_ = true;
  }

  void add_persona(Speaker sp, std::string sentence) { (sp == Speaker::p0 ? p0_ : p1_).push_back(std::move(sentence)); }

  void add_turn(Turn t) { turns_.push_back(std::move(t)); }

  void finish() {
    if (!open_) return;
    open_ = false;
    if (broken_) return;
    Episode ep;
    char buf[32];
    std::snprintf(buf, sizeof buf, "-%06zu", ordinal_);
    ep.id = opts_.id_prefix + buf;
    ep.split = opts_.split;
    auto make = [&](std::vector<std::string>& sentences) -> std::optional<Persona> {
      if (sentences.empty()) return std::nullopt;
      Persona p;
      p.id = persona_content_id(sentences);
      p.variant = opts_.variant;
      p.sentences = std::move(sentences);
      return p;
    };
    ep.p0.get(opts_.variant) = make(p0_);
    ep.p1.get(opts_.variant) = make(p1_);
    ep.turns = std::move(turns_);
    try {
      validate(ep, 0);
    } catch (const ValidationError& e) {
      result_.diagnostics.push_back({start_line_, e.what()});
      return;
    }
    result_.episodes.push_back(std::move(ep));
  }

 private:
  const ParseOptions& opts_;
  ParseResult& result_;
  bool open_ = false;
  bool broken_ = false;
  std::size_t ordinal_ = 0;
  std::size_t start_line_ = 0;
  std::size_t last_number_ = 0;
  std::vector<std::string> p0_, p1_;
  std::vector<Turn> turns_;
};

}  // namespace

ParseResult parse_dialog_file(std::istream& in, const ParseOptions& opts) {
  ParseResult result;
  EpisodeAssembler ep(opts, result);
  std::string raw;
  std::size_t line_no = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    std::size_t number = 0;
    const auto space = line.find(' ');
    const auto digits = line.substr(0, space);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), number);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || number == 0 || space == std::string_view::npos) {
      if (ep.open() && !ep.broken()) ep.abort(line_no, "malformed line number");
      else if (!ep.open()) result.diagnostics.push_back({line_no, "malformed line number"});
      continue;
    }
    if (number == 1) {
      ep.start(line_no);
    } else if (!ep.open()) {
      result.diagnostics.push_back({line_no, "line number " + std::to_string(number) + " outside any episode"});
      continue;
    } else if (number != ep.last_number() + 1 && !ep.broken()) {
      ep.abort(line_no, "malformed line number: expected " + std::to_string(ep.last_number() + 1) + ", got " +
                            std::to_string(number));
    }
    ep.set_number(number);
    if (ep.broken()) continue;

    const std::string_view payload = line.substr(space + 1);
    if (payload.rfind(kYourPersona, 0) == 0) {
      ep.add_persona(Speaker::p1, std::string(trim(payload.substr(kYourPersona.size()))));
      continue;
    }
    if (payload.rfind(kPartnerPersona, 0) == 0) {
      ep.add_persona(Speaker::p0, std::string(trim(payload.substr(kPartnerPersona.size()))));
      continue;
    }

    const auto fields = split(payload, '\t');
    const bool count_ok = opts.expect_candidates ? fields.size() == 4 : (fields.size() >= 2 && fields.size() <= 4);
    if (!count_ok) {
      ep.abort(line_no, "tab-field count mismatch: got " + std::to_string(fields.size()) + " field(s)");
      continue;
    }

    Turn first;
    first.speaker = Speaker::p0;
    first.text = std::string(trim(fields[0]));

    Turn reply;
    reply.speaker = Speaker::p1;
    const auto labels = split(fields[1], '|');
    reply.text = std::string(trim(labels.front()));

    if (opts.expect_candidates) {
      auto cands = split(fields[3], '|');
      for (auto& c : cands) c = std::string(trim(c));
      const auto it = std::find(cands.begin(), cands.end(), reply.text);
      if (it == cands.end()) {
        ep.abort(line_no, "gold response absent from candidate list");
        continue;
      }
      reply.gold_index = static_cast<std::size_t>(it - cands.begin());
      reply.candidates = std::move(cands);
    }
    ep.add_turn(std::move(first));
    ep.add_turn(std::move(reply));
  }
  ep.finish();
  return result;
}

void merge_revised(std::vector<Episode>& original, const std::vector<Episode>& revised) {
  if (original.size() != revised.size()) {
    throw ValidationError("merge_revised: " + std::to_string(original.size()) + " original vs " +
                          std::to_string(revised.size()) + " revised episodes");
  }
  for (std::size_t i = 0; i < original.size(); ++i) {
    Episode& o = original[i];
    const Episode& r = revised[i];
    if (o.id != r.id || o.turns.size() != r.turns.size()) {
      throw ValidationError("merge_revised: episode " + o.id + " does not align with " + r.id);
    }
    for (Speaker sp : {Speaker::p0, Speaker::p1}) {
      const Persona* src = r.persona(sp, Variant::revised);
      if (!src) src = r.persona(sp, Variant::original);
      const Persona* orig = o.persona(sp, Variant::original);
      if (!src || !orig) continue;
      Persona p = *src;
      p.variant = Variant::revised;
      p.id = orig->id;
      o.personas(sp).revised = std::move(p);
    }
  }
}

// ---------------------------------------------------------------- examples

std::vector<Example> build_examples(const std::vector<Episode>& episodes, const ExampleOptions& opts) {
  std::vector<Example> out;
  for (const auto& ep : episodes) {
    auto profile_of = [&](Speaker sp) -> const std::vector<std::string>& {
      const Persona* p = ep.persona(sp, opts.variant);
      if (!p) {
        throw ValidationError("episode " + ep.id + ": " + std::string(to_string(opts.variant)) + " persona of " +
                              std::string(to_string(sp)) + " absent from corpus");
      }
      return p->sentences;
    };
    for (std::size_t t = 0; t < ep.turns.size(); ++t) {
      const Turn& turn = ep.turns[t];
      if (!turn.labeled()) continue;
      if (opts.side && turn.speaker != *opts.side) continue;

      Example ex;
      ex.episode_id = ep.id;
      ex.turn_index = t;
      ex.replier = turn.speaker;
      for (std::size_t j = 0; j < t; ++j) {
        if (ep.turns[j].text != kSilenceToken) ex.context.push_back(ep.turns[j].text);
      }
      switch (opts.mode) {
        case ConditioningMode::none:
          break;
        case ConditioningMode::self:
          ex.profile = profile_of(turn.speaker);
          break;
        case ConditioningMode::their:
          ex.profile = profile_of(other(turn.speaker));
          break;
        case ConditioningMode::both: {
          ex.profile = profile_of(turn.speaker);
          const auto& theirs = profile_of(other(turn.speaker));
          ex.profile.insert(ex.profile.end(), theirs.begin(), theirs.end());
          break;
        }
      }
      ex.gold = turn.text;
      ex.candidates = *turn.candidates;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<Episode> filter_split(const std::vector<Episode>& episodes, Split split) {
  std::vector<Episode> out;
  std::copy_if(episodes.begin(), episodes.end(), std::back_inserter(out),
               [&](const Episode& e) { return e.split == split; });
  return out;
}

std::vector<Persona> collect_personas(const std::vector<Episode>& episodes, Variant variant) {
  std::vector<Persona> out;
  std::set<std::string> seen;
  for (const auto& ep : episodes) {
    for (Speaker sp : {Speaker::p0, Speaker::p1}) {
      const Persona* p = ep.persona(sp, variant);
      if (p && seen.insert(p->id).second) out.push_back(*p);
    }
  }
  return out;
}

}  // namespace persona
