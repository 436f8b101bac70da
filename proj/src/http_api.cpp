#include "persona/http_api.hpp"

#include <filesystem>
#include <set>

#include "httplib.h"
#include "persona/event_log.hpp"

namespace persona {

using nlohmann::json;

namespace {

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send(res, status, json{{"error", code}, {"message", message}});
}

json parse_body(const httplib::Request& req, const std::set<std::string>& allowed) {
  json body = json::object();
  if (!req.body.empty()) {
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      throw ServiceError("invalid_json", "request body is not valid JSON", 400);
    }
  }
  if (!body.is_object()) throw ServiceError("invalid_json", "request body must be a JSON object", 400);
  for (const auto& [key, value] : body.items()) {
    if (!allowed.count(key)) throw ServiceError("invalid_field", "unknown field '" + key + "'", 400);
  }
  return body;
}

int score_field(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end()) throw ServiceError("invalid_field", std::string(key) + " is required", 400);
  if (!it->is_number_integer()) throw ServiceError("invalid_field", std::string(key) + " must be an integer", 400);
  const auto v = it->get<long long>();
  if (v < 1 || v > 5) {
    throw ServiceError("invalid_field", std::string(key) + " must be an integer from 1 to 5, got " + std::to_string(v),
                       400);
  }
  return static_cast<int>(v);
}

std::string string_field(const json& body, const char* key) {
  const auto it = body.find(key);
  if (it == body.end()) throw ServiceError("invalid_field", std::string(key) + " is required", 400);
  if (!it->is_string()) throw ServiceError("invalid_field", std::string(key) + " must be a string", 400);
  return it->get<std::string>();
}

// Runs a handler and maps exceptions onto error bodies.
template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    json body{{"error", e.code()}, {"message", e.what()}};
    if (e.required()) body["required"] = *e.required();
    send(res, e.http_status(), body);
  } catch (const ValidationError& e) {
    send_error(res, 400, "invalid_field", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

}  // namespace

json session_json(const Session& s, std::size_t quiz_threshold) {
  json transcript = json::array();
  for (const auto& m : s.transcript) {
    transcript.push_back(
        json{{"speaker", m.speaker}, {"text", m.text}, {"timestamp_ms", m.timestamp_ms}, {"over_length", m.over_length}});
  }
  json out{{"session_id", s.id},
           {"model_id", s.model_id},
           {"state", to_string(s.state)},
           {"created_ms", s.created_ms},
           {"human_turns", s.human_turns()},
           {"quiz_threshold", quiz_threshold},
           {"quiz_eligible", s.state == SessionState::chatting ? s.human_turns() >= quiz_threshold : s.quiz.has_value()},
           {"transcript", transcript}};
  if (s.evaluation) out["evaluation"] = to_json(*s.evaluation);
  return out;
}

json quiz_json(const Quiz& q) {
  return json{{"personas", json::array({json{{"key", "A"}, {"sentences", q.sentences[0]}},
                                        json{{"key", "B"}, {"sentences", q.sentences[1]}}})}};
}

json stats_json(const ServiceStats& s) {
  const auto rating = [](const RatingStats& r) {
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"n_evaluations", r.n_evaluations},
                {"fluency", opt(r.fluency)},
                {"engagingness", opt(r.engagingness)},
                {"consistency", opt(r.consistency)},
                {"detection_rate", opt(r.detection_rate)}};
  };
  json by_model = json::object();
  for (const auto& [id, r] : s.by_model) by_model[id] = rating(r);
  json out = rating(s.overall);
  out["n_sessions"] = s.n_sessions;
  out["by_model"] = by_model;
  return out;
}

struct HttpServer::Impl {
  ChatService& service;
  httplib::Server server;
  explicit Impl(ChatService& s) : service(s) {}
};

HttpServer::HttpServer(ChatService& service, const std::string& static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  ChatService& svc = service;

  srv.Post("/v1/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req, {"model_id", "seed"});
      const std::string model_id = string_field(body, "model_id");
      std::optional<std::uint64_t> seed;
      if (body.contains("seed")) {
        if (!body["seed"].is_number_unsigned()) {
          throw ServiceError("invalid_field", "seed must be a non-negative integer", 400);
        }
        seed = body["seed"].get<std::uint64_t>();
      }
      const Session s = svc.create_session(model_id, seed);
      send(res, 201, json{{"session_id", s.id}, {"model_id", s.model_id}});
    });
  });

  srv.Post(R"(/v1/sessions/([^/]+)/messages)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req, {"text"});
      const ChatReply r = svc.post_message(req.matches[1], string_field(body, "text"));
      send(res, 200, json{{"reply", r.reply}, {"over_length", r.over_length}});
    });
  });

  srv.Get(R"(/v1/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, session_json(svc.session(req.matches[1]), svc.options().quiz_threshold)); });
  });

  srv.Get(R"(/v1/sessions/([^/]+)/quiz)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, quiz_json(svc.get_quiz(req.matches[1]))); });
  });

  srv.Post(R"(/v1/sessions/([^/]+)/evaluation)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req, {"fluency", "engagingness", "consistency", "profile_choice"});
      EvaluationInput in;
      in.fluency = score_field(body, "fluency");
      in.engagingness = score_field(body, "engagingness");
      in.consistency = score_field(body, "consistency");
      in.profile_choice = string_field(body, "profile_choice");
      send(res, 200, to_json(svc.submit_evaluation(req.matches[1], in)));
    });
  });

  srv.Get("/v1/stats", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, stats_json(svc.stats())); });
  });

  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    const std::string code = res.status == 404 ? "not_found" : "http_error";
    send_error(res, res.status, code, req.method + " " + req.path);
    return httplib::Server::HandlerResponse::Handled;
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send_error(res, 500, "internal", "unexpected server error");
  });

  if (!static_dir.empty()) {
    if (!std::filesystem::is_directory(static_dir)) throw ValidationError("static_dir " + static_dir + " is not a directory");
    srv.set_mount_point("/", static_dir);
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

int HttpServer::bind_any_port(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw Error("cannot bind " + host);
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace persona
