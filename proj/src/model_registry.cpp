#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "persona/model_files.hpp"
#include "persona/service.hpp"

namespace persona {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing '" + key + "'");
  if (!it->is_string()) throw ValidationError(where + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

std::size_t count_field(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_unsigned()) throw ValidationError(where + ": '" + key + "' must be a non-negative integer");
  return it->get<std::size_t>();
}

}  // namespace

ServiceSetup load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read service config " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ValidationError(path + ": expected a JSON object");
  reject_unknown_keys(cfg,
                      {"models", "personas", "persona_split", "reply_pool", "reply_pool_split", "event_log",
                       "quiz_threshold", "max_reply_words", "static_dir"},
                      path);

  const fs::path base = fs::path(path).parent_path();
  const auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() || base.empty() ? fp : base / fp).string();
  };

  ServiceSetup setup;
  const Split persona_split = parse_split(cfg.value("persona_split", std::string("test")));
  const auto persona_eps = filter_split(load_canonical_file(resolve(string_field(cfg, "personas", path))), persona_split);
  setup.personas = collect_personas(persona_eps, Variant::original);
  if (setup.personas.size() < 2) {
    throw ValidationError(path + ": the " + std::string(to_string(persona_split)) +
                          " split holds fewer than 2 personas");
  }

  const auto models = cfg.find("models");
  if (models == cfg.end() || !models->is_object() || models->empty()) {
    throw ValidationError(path + ": 'models' must be a non-empty object");
  }
  std::shared_ptr<const std::vector<std::string>> pool;
  for (const auto& [id, entry] : models->items()) {
    const std::string where = path + ": model '" + id + "'";
    if (!entry.is_object()) throw ValidationError(where + ": expected an object");
    reject_unknown_keys(entry, {"path", "type"}, where);
    const ModelType type = parse_model_type(string_field(entry, "type", where));
    const ModelSlot slot = load_model(resolve(string_field(entry, "path", where)), type);
    if (slot.generative) {
      setup.models[id] = std::make_shared<GenerativeChatModel>(slot.generative);
      continue;
    }
    if (!pool) {
      const Split split = parse_split(cfg.value("reply_pool_split", std::string("train")));
      auto replies = reply_pool_from(load_canonical_file(resolve(string_field(cfg, "reply_pool", path))), split);
      if (replies.empty()) throw ValidationError(path + ": the reply pool is empty");
      pool = std::make_shared<const std::vector<std::string>>(std::move(replies));
    }
    setup.models[id] = std::make_shared<RankingChatModel>(slot.ranker, pool);
  }

  if (cfg.contains("event_log")) setup.options.event_log_path = resolve(string_field(cfg, "event_log", path));
  setup.options.quiz_threshold = count_field(cfg, "quiz_threshold", setup.options.quiz_threshold, path);
  setup.options.max_reply_words = count_field(cfg, "max_reply_words", setup.options.max_reply_words, path);
  if (cfg.contains("static_dir")) setup.static_dir = resolve(string_field(cfg, "static_dir", path));
  return setup;
}

}  // namespace persona
