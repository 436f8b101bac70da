#pragma once

// Model types as named on the command line and in service configs, and a
// loader that turns a model file into a rankable (and maybe generative) slot.

#include <string>
#include <string_view>

#include "persona/eval.hpp"

namespace persona {

enum class ModelType { ir, ranker, profile_mem, kv_profile_mem, seq2seq, lm, gen_profile_mem };

std::string_view to_string(ModelType t);
ModelType parse_model_type(std::string_view s);
bool is_generative(ModelType t);
GenMode gen_mode(ModelType t);

// IR "models" are just the vocabulary file they compute idf from. Ranker and
// generative files must match the declared type.
ModelSlot load_model(const std::string& path, ModelType type);

}  // namespace persona
