#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "persona/corpus.hpp"
#include "persona/errors.hpp"

namespace persona {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json to_json(const Episode& ep) {
  ordered_json j;
  j["v"] = kCanonicalVersion;
  j["id"] = ep.id;
  j["split"] = to_string(ep.split);
  ordered_json personas = ordered_json::array();
  for (Speaker sp : {Speaker::p0, Speaker::p1}) {
    for (Variant v : {Variant::original, Variant::revised}) {
      const Persona* p = ep.persona(sp, v);
      if (!p) continue;
      ordered_json pj;
      pj["speaker"] = to_string(sp);
      pj["variant"] = to_string(v);
      pj["id"] = p->id;
      pj["sentences"] = p->sentences;
      personas.push_back(std::move(pj));
    }
  }
  j["personas"] = std::move(personas);
  ordered_json turns = ordered_json::array();
  for (const auto& t : ep.turns) {
    ordered_json tj;
    tj["speaker"] = to_string(t.speaker);
    tj["text"] = t.text;
    if (t.candidates) tj["candidates"] = *t.candidates;
    if (t.gold_index) tj["gold_index"] = *t.gold_index;
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  return j;
}

void require_keys(const ordered_json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T field(const ordered_json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

Episode from_json(const ordered_json& j) {
  require_keys(j, {"v", "id", "split", "personas", "turns"}, "episode");
  const int version = field<int>(j, "v", "episode");
  if (version != kCanonicalVersion) {
    throw ValidationError("schema version mismatch: got v=" + std::to_string(version) + ", expected v=" +
                          std::to_string(kCanonicalVersion));
  }
  Episode ep;
  ep.id = field<std::string>(j, "id", "episode");
  const std::string where = "episode " + ep.id;
  ep.split = parse_split(field<std::string>(j, "split", where));

  const auto& personas = j.at("personas");
  if (!personas.is_array()) throw ValidationError(where + ": personas must be an array");
  for (const auto& pj : personas) {
    require_keys(pj, {"speaker", "variant", "id", "sentences"}, where + " persona");
    const Speaker sp = parse_speaker(field<std::string>(pj, "speaker", where));
    Persona p;
    p.variant = parse_variant(field<std::string>(pj, "variant", where));
    p.id = field<std::string>(pj, "id", where);
    p.sentences = field<std::vector<std::string>>(pj, "sentences", where);
    auto& slot = ep.personas(sp).get(p.variant);
    if (slot) throw ValidationError(where + ": duplicate persona entry");
    slot = std::move(p);
  }

  const auto& turns = j.at("turns");
  if (!turns.is_array()) throw ValidationError(where + ": turns must be an array");
  for (const auto& tj : turns) {
    require_keys(tj, {"speaker", "text", "candidates", "gold_index"}, where + " turn");
    Turn t;
    t.speaker = parse_speaker(field<std::string>(tj, "speaker", where));
    t.text = field<std::string>(tj, "text", where);
    if (tj.contains("candidates")) t.candidates = field<std::vector<std::string>>(tj, "candidates", where);
    if (tj.contains("gold_index")) t.gold_index = field<std::size_t>(tj, "gold_index", where);
    ep.turns.push_back(std::move(t));
  }
  validate(ep, 0);
  return ep;
}

}  // namespace

void write_canonical(std::ostream& out, const std::vector<Episode>& episodes) {
  for (const auto& ep : episodes) out << to_json(ep).dump() << '\n';
}

std::string write_canonical(const std::vector<Episode>& episodes) {
  std::ostringstream out;
  write_canonical(out, episodes);
  return out.str();
}

std::vector<Episode> load_canonical(std::istream& in) {
  std::vector<Episode> episodes;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++record;
    try {
      episodes.push_back(from_json(ordered_json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("record " + std::to_string(record) + ": malformed JSON (" + e.what() + ")");
    } catch (const ValidationError& e) {
      throw ValidationError("record " + std::to_string(record) + ": " + e.what());
    }
  }
  return episodes;
}

std::vector<Episode> load_canonical_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read corpus " + path);
  return load_canonical(in);
}

void write_canonical_file(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_canonical(out, episodes);
  if (!out) throw Error("write failed for " + path);
}

}  // namespace persona
