#pragma once

// Append-only JSONL persistence for the chat service: one event per line.

#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "persona/service.hpp"

namespace persona {

class EventLog {
 public:
  // Opens `path` for appending, creating it if needed. A torn final line left
  // by a crash is cut off first so new events start on a clean line.
  explicit EventLog(std::string path);

  // Serialized across threads; each event is flushed before returning.
  void append(const nlohmann::json& event);

  const std::string& path() const { return path_; }

  // Every complete event in file order. Throws Error naming the line on a
  // malformed record; an unterminated last line is ignored.
  static std::vector<nlohmann::json> read(const std::string& path);

 private:
  std::string path_;
  std::mutex mu_;
  std::ofstream out_;
};

nlohmann::json to_json(const EvaluationRecord& r);
EvaluationRecord evaluation_from_json(const nlohmann::json& j);

}  // namespace persona
