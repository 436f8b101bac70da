#include "persona/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <unordered_set>

#include "persona/event_log.hpp"
#include "persona/rng.hpp"

namespace persona {

using nlohmann::json;

// ---------------------------------------------------------------- chat models

RankingChatModel::RankingChatModel(std::shared_ptr<const Ranker> ranker,
                                   std::shared_ptr<const std::vector<std::string>> pool)
    : ranker_(std::move(ranker)), pool_(std::move(pool)) {
  if (!ranker_) throw ValidationError("ranking chat model needs a ranker");
  if (!pool_ || pool_->empty()) throw ValidationError("ranking chat model needs a non-empty reply pool");
}

std::string RankingChatModel::reply(const std::vector<std::string>& history,
                                    const std::vector<std::string>& persona) const {
  Example ex;
  ex.context = history;
  ex.profile = persona;
  ex.candidates = *pool_;
  ex.gold = pool_->front();
  return (*pool_)[ranker_->rank(ex).top()];
}

std::string GenerativeChatModel::reply(const std::vector<std::string>& history,
                                       const std::vector<std::string>& persona) const {
  return model_->greedy_decode(history, persona, max_len_);
}

// ---------------------------------------------------------------- helpers

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::chatting: return "chatting";
    case SessionState::awaiting_rating: return "awaiting_rating";
    case SessionState::closed: return "closed";
  }
  return "?";
}

SessionState parse_session_state(std::string_view s) {
  for (SessionState st : {SessionState::chatting, SessionState::awaiting_rating, SessionState::closed})
    if (to_string(st) == s) return st;
  throw ValidationError("unknown session state '" + std::string(s) + "'");
}

std::size_t Session::human_turns() const {
  return static_cast<std::size_t>(
      std::count_if(transcript.begin(), transcript.end(), [](const ChatMessage& m) { return m.speaker == "human"; }));
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

// RFC 4122 version 4 layout over 128 caller-supplied bits.
std::string format_uuid(std::uint64_t hi, std::uint64_t lo) {
  hi = (hi & ~0xF000ULL) | 0x4000ULL;
  lo = (lo & ~(0xC0ULL << 56)) | (0x80ULL << 56);
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

ServiceError unknown_session(const std::string& id) {
  return ServiceError("unknown_session", "no session '" + id + "'", 404);
}

void check_score(const char* field, int v) {
  if (v < 1 || v > 5) {
    throw ServiceError("invalid_field", std::string(field) + " must be an integer from 1 to 5, got " + std::to_string(v),
                       400);
  }
}

json message_json(const ChatMessage& m) {
  return json{{"text", m.text}, {"timestamp_ms", m.timestamp_ms}, {"over_length", m.over_length}};
}

ChatMessage message_from(const json& j, const char* speaker) {
  return ChatMessage{speaker, j.at("text").get<std::string>(), j.at("timestamp_ms").get<std::int64_t>(),
                     j.at("over_length").get<bool>()};
}

}  // namespace

// ---------------------------------------------------------------- service

ChatService::ChatService(std::map<std::string, std::shared_ptr<const ChatModel>> models,
                         std::vector<Persona> persona_pool, ServiceOptions options)
    : models_(std::move(models)), pool_(std::move(persona_pool)), options_(std::move(options)) {
  for (const auto& [id, model] : models_)
    if (!model) throw ValidationError("model '" + id + "' is null");
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (pool_[i].sentences.empty()) throw ValidationError("persona " + pool_[i].id + " has no sentences");
    if (!pool_index_.emplace(pool_[i].id, i).second) throw ValidationError("duplicate persona id " + pool_[i].id);
  }
  // the quiz needs a distractor
  if (pool_.size() < 2) throw ValidationError("persona pool needs at least 2 personas");
  if (options_.quiz_threshold == 0) throw ValidationError("quiz_threshold must be >= 1");

  if (options_.id_seed) {
    id_state_ = *options_.id_seed;
  } else {
    std::random_device rd;
    id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  if (!options_.event_log_path.empty()) {
    replay();
    log_ = std::make_unique<EventLog>(options_.event_log_path);
  }
}

ChatService::~ChatService() = default;

std::int64_t ChatService::now() const {
  if (options_.clock) return options_.clock();
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::uint64_t ChatService::next_random() {
  std::lock_guard lock(rng_mu_);
  id_state_ = derive_seed(id_state_, 0);
  return id_state_;
}

ChatService::Slot& ChatService::slot(const std::string& session_id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw unknown_session(session_id);
  return *it->second;
}

const Persona& ChatService::pool_persona(const std::string& id) const {
  const auto it = pool_index_.find(id);
  if (it == pool_index_.end()) throw Error("persona " + id + " is not in the persona pool");
  return pool_[it->second];
}

Session ChatService::create_session(const std::string& model_id, std::optional<std::uint64_t> seed) {
  if (!models_.count(model_id)) throw ServiceError("unknown_model", "no model '" + model_id + "'", 404);
  auto s = std::make_unique<Slot>();
  Session& session = s->session;
  session.model_id = model_id;
  if (seed) {
    session.persona_id = pool_[Rng(derive_seed(*seed, 0)).index(pool_.size())].id;
    session.quiz_seed = derive_seed(*seed, 1);
  } else {
    session.persona_id = pool_[Rng(next_random()).index(pool_.size())].id;
    session.quiz_seed = next_random();
  }
  session.created_ms = now();

  std::unique_lock lock(sessions_mu_);
  do {
    const std::uint64_t hi = next_random();
    session.id = format_uuid(hi, next_random());
  } while (sessions_.count(session.id));
  if (log_) {
    log_->append(json{{"event", "session_created"},
                      {"session_id", session.id},
                      {"model_id", session.model_id},
                      {"persona_id", session.persona_id},
                      {"quiz_seed", session.quiz_seed},
                      {"created_ms", session.created_ms}});
  }
  Session out = session;
  sessions_.emplace(out.id, std::move(s));
  return out;
}

ChatReply ChatService::post_message(const std::string& session_id, const std::string& raw_text) {
  const std::string text = trim(raw_text);
  if (text.empty()) throw ServiceError("empty_text", "message text is empty", 400);
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mu);
  Session& session = s.session;
  if (session.state == SessionState::closed) throw ServiceError("session_closed", "session is closed", 409);
  if (session.state != SessionState::chatting) {
    throw ServiceError("invalid_state", "session is awaiting its rating; no more messages", 409);
  }
  const auto model = models_.find(session.model_id);
  if (model == models_.end()) {
    throw ServiceError("unknown_model", "model '" + session.model_id + "' is no longer loaded", 404);
  }

  std::vector<std::string> history;
  history.reserve(session.transcript.size() + 1);
  for (const auto& m : session.transcript) history.push_back(m.text);
  history.push_back(text);

  ChatMessage human{"human", text, now(), false};
  const std::string reply = model->second->reply(history, pool_persona(session.persona_id).sentences);
  ChatMessage bot{"model", reply, now(), word_count(reply) > options_.max_reply_words};

  if (log_) {
    log_->append(json{{"event", "message"},
                      {"session_id", session.id},
                      {"human", message_json(human)},
                      {"model", message_json(bot)}});
  }
  session.transcript.push_back(std::move(human));
  session.transcript.push_back(bot);
  return ChatReply{bot.text, bot.over_length};
}

Quiz ChatService::get_quiz(const std::string& session_id) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mu);
  Session& session = s.session;
  if (session.quiz) return *session.quiz;

  const std::size_t have = session.human_turns();
  if (have < options_.quiz_threshold) {
    throw ServiceError("dialogue_too_short",
                       "the quiz opens after " + std::to_string(options_.quiz_threshold) + " human turns; have " +
                           std::to_string(have),
                       409, options_.quiz_threshold);
  }
  const std::size_t true_index = pool_index_.at(session.persona_id);
  Rng rng(session.quiz_seed);
  std::size_t distractor = rng.index(pool_.size() - 1);
  if (distractor >= true_index) ++distractor;
  Quiz quiz;
  quiz.true_first = rng.coin();
  const std::size_t first = quiz.true_first ? true_index : distractor;
  const std::size_t second = quiz.true_first ? distractor : true_index;
  quiz.persona_ids = {pool_[first].id, pool_[second].id};
  quiz.sentences = {pool_[first].sentences, pool_[second].sentences};

  if (log_) {
    log_->append(json{{"event", "quiz_issued"},
                      {"session_id", session.id},
                      {"persona_ids", quiz.persona_ids},
                      {"true_first", quiz.true_first}});
  }
  session.quiz = quiz;
  session.state = SessionState::awaiting_rating;
  return quiz;
}

EvaluationRecord ChatService::submit_evaluation(const std::string& session_id, const EvaluationInput& input) {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mu);
  Session& session = s.session;
  if (session.state == SessionState::closed) {
    throw ServiceError("already_submitted", "an evaluation was already stored for this session", 409);
  }
  if (session.state != SessionState::awaiting_rating) {
    throw ServiceError("invalid_state", "fetch the quiz before submitting an evaluation", 409);
  }
  check_score("fluency", input.fluency);
  check_score("engagingness", input.engagingness);
  check_score("consistency", input.consistency);
  if (input.profile_choice != "A" && input.profile_choice != "B") {
    throw ServiceError("invalid_field", "profile_choice must be \"A\" or \"B\"", 400);
  }

  const Quiz& quiz = *session.quiz;
  EvaluationRecord r;
  r.session_id = session.id;
  r.model_id = session.model_id;
  r.fluency = input.fluency;
  r.engagingness = input.engagingness;
  r.consistency = input.consistency;
  r.profile_choice = input.profile_choice;
  r.true_first = quiz.true_first;
  r.chose_true_profile = (input.profile_choice == "A") == quiz.true_first;
  r.persona_ids = quiz.persona_ids;
  r.timestamp_ms = now();

  if (log_) {
    json ev = to_json(r);
    ev["event"] = "evaluation";
    log_->append(ev);
  }
  session.evaluation = r;
  session.state = SessionState::closed;
  return r;
}

Session ChatService::session(const std::string& session_id) const {
  Slot& s = slot(session_id);
  std::lock_guard lock(s.mu);
  return s.session;
}

std::vector<Session> ChatService::sessions() const {
  std::shared_lock lock(sessions_mu_);
  std::vector<Session> out;
  out.reserve(sessions_.size());
  for (const auto& [id, s] : sessions_) {
    std::lock_guard slot_lock(s->mu);
    out.push_back(s->session);
  }
  return out;
}

ServiceStats ChatService::stats() const {
  struct Sums {
    std::size_t n = 0, correct = 0;
    double fluency = 0, engagingness = 0, consistency = 0;
    void add(const EvaluationRecord& r) {
      ++n;
      correct += r.detection_correct() ? 1 : 0;
      fluency += r.fluency;
      engagingness += r.engagingness;
      consistency += r.consistency;
    }
    RatingStats done() const {
      RatingStats out;
      out.n_evaluations = n;
      if (n == 0) return out;
      const double d = static_cast<double>(n);
      out.fluency = fluency / d;
      out.engagingness = engagingness / d;
      out.consistency = consistency / d;
      out.detection_rate = static_cast<double>(correct) / d;
      return out;
    }
  };
  Sums all;
  std::map<std::string, Sums> per_model;
  const auto snapshot = sessions();
  for (const auto& s : snapshot) {
    if (!s.evaluation) continue;
    all.add(*s.evaluation);
    per_model[s.model_id].add(*s.evaluation);
  }
  ServiceStats out;
  out.n_sessions = snapshot.size();
  out.overall = all.done();
  for (const auto& [id, sums] : per_model) out.by_model[id] = sums.done();
  return out;
}

void ChatService::replay() {
  const auto events = EventLog::read(options_.event_log_path);
  std::size_t n = 0;
  for (const auto& ev : events) {
    ++n;
    const auto where = [&] { return options_.event_log_path + ": event " + std::to_string(n); };
    try {
      const std::string type = ev.at("event").get<std::string>();
      const std::string id = ev.at("session_id").get<std::string>();
      if (type == "session_created") {
        auto s = std::make_unique<Slot>();
        s->session.id = id;
        s->session.model_id = ev.at("model_id").get<std::string>();
        s->session.persona_id = ev.at("persona_id").get<std::string>();
        s->session.quiz_seed = ev.at("quiz_seed").get<std::uint64_t>();
        s->session.created_ms = ev.at("created_ms").get<std::int64_t>();
        pool_persona(s->session.persona_id);
        if (!sessions_.emplace(id, std::move(s)).second) throw Error("session " + id + " created twice");
        continue;
      }
      const auto it = sessions_.find(id);
      if (it == sessions_.end()) throw Error("unknown session " + id);
      Session& session = it->second->session;
      if (type == "message") {
        if (session.state != SessionState::chatting) throw Error("message after the quiz");
        session.transcript.push_back(message_from(ev.at("human"), "human"));
        session.transcript.push_back(message_from(ev.at("model"), "model"));
      } else if (type == "quiz_issued") {
        if (session.state != SessionState::chatting) throw Error("second quiz");
        Quiz quiz;
        quiz.persona_ids = ev.at("persona_ids").get<std::array<std::string, 2>>();
        quiz.true_first = ev.at("true_first").get<bool>();
        for (std::size_t k = 0; k < 2; ++k) quiz.sentences[k] = pool_persona(quiz.persona_ids[k]).sentences;
        session.quiz = std::move(quiz);
        session.state = SessionState::awaiting_rating;
      } else if (type == "evaluation") {
        if (session.state != SessionState::awaiting_rating) throw Error("evaluation outside awaiting_rating");
        session.evaluation = evaluation_from_json(ev);
        session.state = SessionState::closed;
      } else {
        throw Error("unknown event type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw Error(where() + ": " + e.what());
    } catch (const Error& e) {
      throw Error(where() + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------- configuration

std::vector<std::string> reply_pool_from(const std::vector<Episode>& episodes, Split split) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& ep : episodes) {
    if (ep.split != split) continue;
    for (const auto& t : ep.turns) {
      if (t.text == kSilenceToken) continue;
      if (seen.insert(t.text).second) out.push_back(t.text);
    }
  }
  return out;
}

}  // namespace persona
