#pragma once

// JSON-over-HTTP front end for ChatService. Routes:
//   POST /v1/sessions                   {model_id, seed?}
//   POST /v1/sessions/{id}/messages     {text}
//   GET  /v1/sessions/{id}
//   GET  /v1/sessions/{id}/quiz
//   POST /v1/sessions/{id}/evaluation   {fluency, engagingness, consistency, profile_choice}
//   GET  /v1/stats
// Failures answer {error: code, message}. A static directory, if given, is
// served at "/".

#include <memory>
#include <string>

#include "json.hpp"
#include "persona/service.hpp"

namespace persona {

class HttpServer {
 public:
  explicit HttpServer(ChatService& service, const std::string& static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds without serving. Returns the port; throws Error on failure.
  int bind(const std::string& host, int port);
  int bind_any_port(const std::string& host = "127.0.0.1");
  // Serves until stop() is called from another thread.
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Response bodies, exposed for the tests. None of them carries the model's
// persona except quiz_json and evaluation records.
nlohmann::json session_json(const Session& s, std::size_t quiz_threshold);
nlohmann::json quiz_json(const Quiz& q);
nlohmann::json stats_json(const ServiceStats& s);

}  // namespace persona
