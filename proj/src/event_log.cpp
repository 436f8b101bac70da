#include "persona/event_log.hpp"

#include <filesystem>

#include "persona/errors.hpp"

namespace persona {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Byte offset just past the last newline, or 0.
std::uintmax_t complete_prefix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uintmax_t offset = 0, pos = 0;
  char c;
  while (in.get(c)) {
    ++pos;
    if (c == '\n') offset = pos;
  }
  return offset;
}

}  // namespace

EventLog::EventLog(std::string path) : path_(std::move(path)) {
  std::error_code ec;
  if (fs::exists(path_, ec)) {
    const auto keep = complete_prefix(path_);
    if (keep != fs::file_size(path_)) fs::resize_file(path_, keep);
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error("cannot open event log " + path_);
}

void EventLog::append(const json& event) {
  std::lock_guard lock(mu_);
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw Error("write failed for event log " + path_);
}

std::vector<json> EventLog::read(const std::string& path) {
  std::vector<json> events;
  std::ifstream in(path, std::ios::binary);
  if (!in) return events;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    // getline at EOF without a trailing newline: torn write
    if (in.eof()) break;
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(path + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  return events;
}

json to_json(const EvaluationRecord& r) {
  return json{{"session_id", r.session_id},
              {"model_id", r.model_id},
              {"fluency", r.fluency},
              {"engagingness", r.engagingness},
              {"consistency", r.consistency},
              {"profile_choice", r.profile_choice},
              {"chosen", r.chose_true_profile ? "true_profile" : "distractor"},
              {"detection_correct", r.detection_correct()},
              {"true_profile_first", r.true_first},
              {"persona_ids_shown", r.persona_ids},
              {"timestamp_ms", r.timestamp_ms}};
}

EvaluationRecord evaluation_from_json(const json& j) {
  EvaluationRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.fluency = j.at("fluency").get<int>();
  r.engagingness = j.at("engagingness").get<int>();
  r.consistency = j.at("consistency").get<int>();
  r.profile_choice = j.at("profile_choice").get<std::string>();
  r.chose_true_profile = j.at("chosen").get<std::string>() == "true_profile";
  r.true_first = j.at("true_profile_first").get<bool>();
  r.persona_ids = j.at("persona_ids_shown").get<std::array<std::string, 2>>();
  r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  return r;
}

}  // namespace persona
