#include "persona/model_files.hpp"

#include <array>
#include <utility>

#include "persona/errors.hpp"
#include "persona/generative.hpp"

namespace persona {

namespace {

constexpr std::array<std::pair<ModelType, std::string_view>, 7> kNames{{
    {ModelType::ir, "ir"},
    {ModelType::ranker, "ranker"},
    {ModelType::profile_mem, "profile-mem"},
    {ModelType::kv_profile_mem, "kv-profile-mem"},
    {ModelType::seq2seq, "seq2seq"},
    {ModelType::lm, "lm"},
    {ModelType::gen_profile_mem, "gen-profile-mem"},
}};

RankerKind ranker_kind(ModelType t) {
  switch (t) {
    case ModelType::profile_mem: return RankerKind::profile_memory;
    case ModelType::kv_profile_mem: return RankerKind::kv_profile_memory;
    default: return RankerKind::plain;
  }
}

}  // namespace

std::string_view to_string(ModelType t) {
  for (const auto& [type, name] : kNames)
    if (type == t) return name;
  return "?";
}

ModelType parse_model_type(std::string_view s) {
  for (const auto& [type, name] : kNames)
    if (name == s) return type;
  throw ValidationError("unknown model type '" + std::string(s) +
                        "' (expected ir, ranker, profile-mem, kv-profile-mem, seq2seq, lm or gen-profile-mem)");
}

bool is_generative(ModelType t) {
  return t == ModelType::seq2seq || t == ModelType::lm || t == ModelType::gen_profile_mem;
}

GenMode gen_mode(ModelType t) {
  switch (t) {
    case ModelType::lm: return GenMode::lm;
    case ModelType::gen_profile_mem: return GenMode::profile_memory;
    default: return GenMode::seq2seq;
  }
}

ModelSlot load_model(const std::string& path, ModelType type) {
  ModelSlot slot;
  if (type == ModelType::ir) {
    slot.ranker = std::make_shared<IrRanker>(Vocabulary::load_file(path));
  } else if (is_generative(type)) {
    std::shared_ptr<const GenerativeModel> gen = load_generative(path);
    if (gen->mode() != gen_mode(type)) {
      throw ValidationError(path + ": holds a " + std::string(to_string(gen->mode())) + " model, not " +
                            std::string(to_string(type)));
    }
    slot.generative = gen;
    slot.ranker = std::make_shared<GenerativeRanker>(gen);
  } else {
    std::shared_ptr<const EmbeddingRanker> r = load_ranker(path);
    if (r->kind() != ranker_kind(type)) {
      throw ValidationError(path + ": holds a " + r->name() + " model, not " + std::string(to_string(type)));
    }
    slot.ranker = r;
  }
  return slot;
}

}  // namespace persona
