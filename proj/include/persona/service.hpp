#pragma once

// Live chat sessions against trained models plus the human-evaluation
// protocol: hidden persona, rating form and the two-profile detection quiz.
// Every state change is appended to a JSONL event log and replayed on start.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "persona/corpus.hpp"
#include "persona/errors.hpp"
#include "persona/generative.hpp"
#include "persona/rankers.hpp"

namespace persona {

// A failure with a stable machine-readable code, e.g. "session_closed".
class ServiceError : public ValidationError {
 public:
  ServiceError(std::string code, const std::string& message, int http_status,
               std::optional<std::size_t> required = std::nullopt)
      : ValidationError(message), code_(std::move(code)), status_(http_status), required_(required) {}
  const std::string& code() const { return code_; }
  int http_status() const { return status_; }
  // Turn count still needed, for dialogue_too_short.
  std::optional<std::size_t> required() const { return required_; }

 private:
  std::string code_;
  int status_;
  std::optional<std::size_t> required_;
};

// ---------------------------------------------------------------- chat models

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  // history = transcript so far, ending with the human's latest message.
  virtual std::string reply(const std::vector<std::string>& history, const std::vector<std::string>& persona) const = 0;
};

// Picks the top-ranked utterance of a fixed reply pool.
class RankingChatModel : public ChatModel {
 public:
  RankingChatModel(std::shared_ptr<const Ranker> ranker, std::shared_ptr<const std::vector<std::string>> pool);
  std::string reply(const std::vector<std::string>& history, const std::vector<std::string>& persona) const override;

 private:
  std::shared_ptr<const Ranker> ranker_;
  std::shared_ptr<const std::vector<std::string>> pool_;
};

class GenerativeChatModel : public ChatModel {
 public:
  explicit GenerativeChatModel(std::shared_ptr<const GenerativeModel> model, std::size_t max_len = 15)
      : model_(std::move(model)), max_len_(max_len) {}
  std::string reply(const std::vector<std::string>& history, const std::vector<std::string>& persona) const override;

 private:
  std::shared_ptr<const GenerativeModel> model_;
  std::size_t max_len_;
};

// ---------------------------------------------------------------- session state

enum class SessionState { chatting, awaiting_rating, closed };
std::string_view to_string(SessionState s);
SessionState parse_session_state(std::string_view s);

struct ChatMessage {
  std::string speaker;  // "human" or "model"
  std::string text;
  std::int64_t timestamp_ms = 0;
  bool over_length = false;

  bool operator==(const ChatMessage&) const = default;
};

struct Quiz {
  // Persona ids in display order: keys "A" and "B".
  std::array<std::string, 2> persona_ids;
  std::array<std::vector<std::string>, 2> sentences;
  bool true_first = false;

  bool operator==(const Quiz&) const = default;
};

struct EvaluationInput {
  int fluency = 0;
  int engagingness = 0;
  int consistency = 0;
  std::string profile_choice;  // "A" or "B"
};

struct EvaluationRecord {
  std::string session_id;
  std::string model_id;
  int fluency = 0;
  int engagingness = 0;
  int consistency = 0;
  std::string profile_choice;
  bool chose_true_profile = false;
  bool true_first = false;
  std::array<std::string, 2> persona_ids;
  std::int64_t timestamp_ms = 0;

  bool detection_correct() const { return chose_true_profile; }
  bool operator==(const EvaluationRecord&) const = default;
};

struct Session {
  std::string id;
  std::string model_id;
  std::string persona_id;
  std::uint64_t quiz_seed = 0;
  SessionState state = SessionState::chatting;
  std::int64_t created_ms = 0;
  std::vector<ChatMessage> transcript;
  std::optional<Quiz> quiz;
  std::optional<EvaluationRecord> evaluation;

  std::size_t human_turns() const;
  bool operator==(const Session&) const = default;
};

struct ChatReply {
  std::string reply;
  bool over_length = false;
};

struct RatingStats {
  std::size_t n_evaluations = 0;
  std::optional<double> fluency;
  std::optional<double> engagingness;
  std::optional<double> consistency;
  std::optional<double> detection_rate;
};

struct ServiceStats {
  std::size_t n_sessions = 0;
  RatingStats overall;
  std::map<std::string, RatingStats> by_model;
};

struct ServiceOptions {
  std::size_t quiz_threshold = 6;
  std::size_t max_reply_words = 15;
  // Empty keeps everything in memory.
  std::string event_log_path;
  // Milliseconds since the epoch; tests inject a fixed clock.
  std::function<std::int64_t()> clock;
  // Seeds session ids and unseeded persona draws; random_device when unset.
  std::optional<std::uint64_t> id_seed;
};

class EventLog;

class ChatService {
 public:
  // Replays the event log, if any, before accepting requests.
  ChatService(std::map<std::string, std::shared_ptr<const ChatModel>> models, std::vector<Persona> persona_pool,
              ServiceOptions options = {});
  ~ChatService();
  ChatService(const ChatService&) = delete;
  ChatService& operator=(const ChatService&) = delete;

  Session create_session(const std::string& model_id, std::optional<std::uint64_t> seed = std::nullopt);
  ChatReply post_message(const std::string& session_id, const std::string& text);
  // Moves a chatting session to awaiting_rating; repeated calls return the same quiz.
  Quiz get_quiz(const std::string& session_id);
  EvaluationRecord submit_evaluation(const std::string& session_id, const EvaluationInput& input);

  Session session(const std::string& session_id) const;
  // Snapshot ordered by session id.
  std::vector<Session> sessions() const;
  ServiceStats stats() const;

  const ServiceOptions& options() const { return options_; }
  bool has_model(const std::string& id) const { return models_.count(id) > 0; }

 private:
  struct Slot {
    std::mutex mu;
    Session session;
  };

  std::map<std::string, std::shared_ptr<const ChatModel>> models_;
  std::vector<Persona> pool_;
  std::map<std::string, std::size_t> pool_index_;
  ServiceOptions options_;
  std::unique_ptr<EventLog> log_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;

  std::mutex rng_mu_;
  std::uint64_t id_state_;

  std::int64_t now() const;
  std::uint64_t next_random();
  Slot& slot(const std::string& session_id) const;
  const Persona& pool_persona(const std::string& id) const;
  void replay();
};

// ---------------------------------------------------------------- configuration

// Everything `serve` needs, loaded from a JSON config file:
//   {"models": {"<id>": {"path": "...", "type": "profile-mem"}},
//    "personas": "corpus.jsonl", "persona_split": "test",
//    "reply_pool": "corpus.jsonl", "reply_pool_split": "train",
//    "event_log": "events.jsonl", "quiz_threshold": 6, "static_dir": "ui/dist"}
// Relative paths resolve against the config file's directory.
struct ServiceSetup {
  std::map<std::string, std::shared_ptr<const ChatModel>> models;
  std::vector<Persona> personas;
  ServiceOptions options;
  std::string static_dir;
};

ServiceSetup load_service_config(const std::string& path);

// Distinct utterances of one split in corpus order, silence placeholders dropped.
std::vector<std::string> reply_pool_from(const std::vector<Episode>& episodes, Split split);

}  // namespace persona
