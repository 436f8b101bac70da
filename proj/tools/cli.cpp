#include "persona/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "persona/corpus.hpp"
#include "persona/eval.hpp"
#include "persona/generative.hpp"
#include "persona/http_api.hpp"
#include "persona/model_files.hpp"
#include "persona/ranker_training.hpp"
#include "persona/rng.hpp"
#include "persona/service.hpp"
#include "persona/synthetic.hpp"

namespace persona {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kModelTypes{"ir", "ranker", "profile-mem", "kv-profile-mem",
                                           "seq2seq", "lm", "gen-profile-mem"};
const std::vector<std::string> kModes{"none", "self", "their", "both"};
const std::vector<std::string> kVariants{"original", "revised"};
const std::vector<std::string> kSplits{"train", "valid", "test"};
const std::vector<std::string> kSpeakers{"p0", "p1"};

// --config: a flat JSON object keyed by the active subcommand's long flag
// names. CLI11 applies an entry only when the flag was not given.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    std::vector<std::string> parents;
    const auto subs = root_->get_subcommands();
    if (!subs.empty()) parents.push_back(subs.front()->get_name());

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      // global flags such as seed belong to the root
      if (root_->get_option_no_throw("--" + key) == nullptr) {
        if (subs.empty() || subs.front()->get_option_no_throw("--" + key) == nullptr) {
          throw ValidationError("config: unknown key '" + key + "'" +
                                (subs.empty() ? std::string() : " for " + subs.front()->get_name()));
        }
        item.parents = parents;
      }
      item.name = key;
      const auto add = [&](const json& v) {
        if (v.is_string()) {
          item.inputs.push_back(v.get<std::string>());
        } else if (v.is_boolean()) {
          item.inputs.push_back(v.get<bool>() ? "true" : "false");
        } else if (v.is_number()) {
          item.inputs.push_back(v.dump());
        } else {
          throw ValidationError("config: '" + key + "' must be a string, number, boolean or array of those");
        }
      };
      if (value.is_array()) {
        for (const auto& v : value) add(v);
      } else {
        add(value);
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

// ---------------------------------------------------------------- small helpers

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw ValidationError(std::string(what) + " '" + path + "' does not exist");
}

void require_output(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ValidationError("output directory '" + parent.string() + "' does not exist");
  }
}

// "train=path" or plain "path" (which means the fallback split).
std::pair<Split, std::string> split_spec(const std::string& spec, Split fallback) {
  const auto eq = spec.find('=');
  if (eq != std::string::npos) {
    const std::string head = spec.substr(0, eq);
    if (std::find(kSplits.begin(), kSplits.end(), head) != kSplits.end()) {
      return {parse_split(head), spec.substr(eq + 1)};
    }
  }
  return {fallback, spec};
}

std::vector<Episode> load_split(const std::string& path, Split split) {
  require_file(path, "corpus");
  auto eps = filter_split(load_canonical_file(path), split);
  if (eps.empty()) throw ValidationError(path + " has no " + std::string(to_string(split)) + " episodes");
  return eps;
}

void print_stats(std::ostream& out, const CorpusStats& s) {
  out << "episodes: " << s.n_episodes << "\n"
      << "utterances: " << s.n_utterances << "\n"
      << "personas: " << s.n_personas << "\n";
  for (const auto& [split, st] : s.per_split) {
    out << to_string(split) << ": " << st.n_episodes << " episodes, " << st.n_utterances << " utterances\n";
  }
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::vector<std::string> split_bar(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, '|')) {
    const auto b = cur.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    out.push_back(cur.substr(b, cur.find_last_not_of(' ') - b + 1));
  }
  return out;
}

// ---------------------------------------------------------------- subcommands

struct IngestArgs {
  std::vector<std::string> in;
  std::vector<std::string> revised;
  std::string out;
  std::size_t n_candidates = 0;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  std::map<Split, std::string> originals, revisions;
  for (const auto& spec : a.in) {
    const auto [split, path] = split_spec(spec, Split::train);
    if (!originals.emplace(split, path).second) throw ValidationError("two --in files for split " + std::string(to_string(split)));
    require_file(path, "input");
  }
  for (const auto& spec : a.revised) {
    const auto [split, path] = split_spec(spec, Split::train);
    if (!originals.count(split)) throw ValidationError("--revised " + path + " has no matching --in split");
    if (!revisions.emplace(split, path).second) throw ValidationError("two --revised files for one split");
    require_file(path, "input");
  }
  require_output(a.out);

  const auto parse = [&](const std::string& path, Split split, Variant variant) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    ParseOptions opts;
    opts.expect_candidates = a.n_candidates > 0;
    opts.split = split;
    opts.variant = variant;
    opts.id_prefix = std::string(to_string(split));
    ParseResult r = parse_dialog_file(in, opts);
    for (const auto& d : r.diagnostics) err << "warning: " << path << ":" << d.line << ": " << d.message << "\n";
    if (!r.diagnostics.empty()) err << "warning: " << path << ": " << r.diagnostics.size() << " episode(s) skipped\n";
    return r.episodes;
  };

  std::vector<Episode> all;
  for (const auto& [split, path] : originals) {
    auto eps = parse(path, split, Variant::original);
    if (revisions.count(split)) merge_revised(eps, parse(revisions.at(split), split, Variant::revised));
    for (const auto& ep : eps) validate(ep, a.n_candidates);
    all.insert(all.end(), eps.begin(), eps.end());
  }
  write_canonical_file(a.out, all);
  print_stats(out, compute_stats(all));
  return 0;
}

struct SynthArgs {
  std::string out;
  SyntheticConfig cfg;
};

int cmd_synth(const SynthArgs& a, std::uint64_t seed, std::ostream& out) {
  require_output(a.out);
  SyntheticConfig cfg = a.cfg;
  cfg.seed = seed;
  const SyntheticCorpus c = generate_synthetic(cfg);
  write_canonical_file(a.out, c.episodes);
  print_stats(out, compute_stats(c.episodes));
  return 0;
}

struct TrainArgs {
  std::string in;
  std::string out;
  std::string model_type;
  std::string mode = "self";
  std::string variant = "original";
  std::string split = "train";
  std::size_t n_candidates = kDefaultCandidates;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  TrainConfig ranker;
  GenConfig gen;
  std::size_t top_m = 50;
  std::string vectors;
};

int cmd_train(const TrainArgs& a, std::uint64_t seed, std::ostream& out) {
  const ModelType type = parse_model_type(a.model_type);
  require_output(a.out);
  if (!a.vectors.empty()) require_file(a.vectors, "vectors file");
  const auto train = with_sampled_candidates(load_split(a.in, parse_split(a.split)), a.n_candidates - 1, seed);
  const Vocabulary vocab = Vocabulary::build(vocabulary_documents(train));
  const auto examples = build_examples(train, ExampleOptions{parse_mode(a.mode), parse_variant(a.variant), std::nullopt});
  if (examples.empty()) throw ValidationError(a.in + ": no training examples");

  if (type == ModelType::ir) {
    vocab.save_file(a.out);
  } else if (is_generative(type)) {
    GenConfig cfg = a.gen;
    cfg.mode = gen_mode(type);
    cfg.seed = seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.lr) cfg.learning_rate = *a.lr;
    GenerativeModel model(vocab, cfg);
    if (!a.vectors.empty()) out << "loaded " << load_text_vectors(model, a.vectors) << " pretrained vectors\n";
    GenTrainingLog log;
    train_generative(model, examples, &log);
    for (std::size_t e = 0; e < log.epoch_nll_per_token.size(); ++e) {
      out << "epoch " << e + 1 << " nll/token " << log.epoch_nll_per_token[e] << "\n";
    }
    save_generative(a.out, model);
  } else {
    TrainConfig cfg = a.ranker;
    cfg.seed = seed;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.lr) cfg.learning_rate = *a.lr;
    const bool attention = type != ModelType::ranker;
    TrainingLog log;
    EmbeddingMatrix emb = train_ranker(examples, vocab, cfg, attention, &log);
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
      out << "epoch " << e + 1 << " loss " << log.epoch_loss[e] << "\n";
    }
    EmbeddingRanker model(vocab, emb, attention ? RankerKind::profile_memory : RankerKind::plain, cfg.hops);
    if (type == ModelType::kv_profile_mem) model.attach_kv(kv_build(examples, vocab, emb.W, a.top_m));
    save_ranker(a.out, model);
  }
  out << "trained " << to_string(type) << " on " << examples.size() << " examples -> " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string in;
  std::string split = "test";
  std::vector<std::string> models;
  std::vector<std::string> modes{"none", "self"};
  std::vector<std::string> variants{"original"};
  std::vector<std::string> train_variants{"original"};
  std::string side;
  std::size_t n_candidates = kDefaultCandidates;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  struct Spec {
    ModelType type;
    std::string path;
  };
  std::map<std::string, Spec> specs;
  EvalConfig cfg;
  for (const auto& m : a.models) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) throw ValidationError("--model expects [NAME:]TYPE=PATH, got '" + m + "'");
    std::string head = m.substr(0, eq), name = head;
    const auto colon = head.find(':');
    if (colon != std::string::npos) {
      name = head.substr(0, colon);
      head = head.substr(colon + 1);
    }
    if (!specs.emplace(name, Spec{parse_model_type(head), m.substr(eq + 1)}).second) {
      throw ValidationError("model name '" + name + "' given twice");
    }
    cfg.models.push_back(name);
  }
  cfg.modes.clear();
  for (const auto& m : a.modes) cfg.modes.push_back(parse_mode(m));
  cfg.variants.clear();
  for (const auto& v : a.variants) cfg.variants.push_back(parse_variant(v));
  cfg.train_variants.clear();
  for (const auto& v : a.train_variants) cfg.train_variants.push_back(parse_variant(v));
  if (!a.side.empty()) cfg.side = parse_speaker(a.side);
  if (a.n_candidates < 2) throw ValidationError("--n-candidates must be >= 2");
  cfg.n_distractors = a.n_candidates - 1;
  cfg.seed = seed;
  cfg.validate();
  if (!a.out.empty()) require_output(a.out);
  const auto episodes = load_split(a.in, parse_split(a.split));

  std::map<std::string, std::optional<ModelSlot>> cache;
  const auto provider = [&](const CellKey& key) -> std::optional<ModelSlot> {
    const Spec& spec = specs.at(key.model);
    std::string path = replace_all(spec.path, "{mode}", std::string(to_string(key.mode)));
    path = replace_all(path, "{variant}", std::string(to_string(key.variant)));
    path = replace_all(path, "{train_variant}", std::string(to_string(key.train_variant)));
    const auto hit = cache.find(path);
    if (hit != cache.end()) return hit->second;
    std::optional<ModelSlot> slot;
    if (fs::exists(path)) {
      slot = load_model(path, spec.type);
    } else {
      err << "warning: model file '" << path << "' not found\n";
    }
    cache.emplace(path, slot);
    return slot;
  };

  std::vector<std::string> warnings;
  const EvalReport report = run_matrix(episodes, provider, cfg, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  out << report.to_table();
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw Error("cannot write " + a.out);
    f << report.to_jsonl();
  }
  return 0;
}

struct ProfilePredArgs {
  std::string in;
  std::string split = "test";
  std::string pool;
  std::string level = "both";
  std::string speaker = "p0";
  std::string target = "p0";
  std::string variant = "original";
  std::size_t n_negatives = 100;
  std::size_t max_length = 8;
  std::string out;
};

int cmd_profile_pred(const ProfilePredArgs& a, std::uint64_t seed, std::ostream& out) {
  ProfilePredConfig base;
  base.n_negatives = a.n_negatives;
  base.speaker = parse_speaker(a.speaker);
  base.target = parse_speaker(a.target);
  base.variant = parse_variant(a.variant);
  base.max_length = a.max_length;
  base.seed = seed;
  std::vector<ProfileLevel> levels;
  if (a.level == "both") {
    levels = {ProfileLevel::profile, ProfileLevel::sentence};
  } else {
    levels = {parse_profile_level(a.level)};
  }
  for (ProfileLevel l : levels) {
    base.level = l;
    base.validate();
  }
  if (!a.out.empty()) require_output(a.out);
  const auto dialogues = load_split(a.in, parse_split(a.split));
  const std::string pool_path = a.pool.empty() ? a.in : a.pool;
  require_file(pool_path, "pool corpus");
  const auto pool = collect_personas(load_canonical_file(pool_path), base.variant);

  json results = json::array();
  for (ProfileLevel l : levels) {
    ProfilePredConfig cfg = base;
    cfg.level = l;
    const ProfilePredResult r = profile_prediction(dialogues, pool, cfg);
    out << to_string(l) << "-level: " << r.n_dialogues << " dialogues, error " << std::fixed << std::setprecision(4)
        << r.error_rate << ", mean rank " << r.mean_rank << "\n";
    for (std::size_t n = 0; n < r.error_by_length.size(); ++n) {
      out << "  length " << n + 1 << ": error " << r.error_by_length[n] << "\n";
    }
    out.unsetf(std::ios::floatfield);
    results.push_back(json{{"level", to_string(l)},
                           {"n_dialogues", r.n_dialogues},
                           {"error_rate", r.error_rate},
                           {"mean_rank", r.mean_rank},
                           {"error_by_length", r.error_by_length}});
  }
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw Error("cannot write " + a.out);
    f << results.dump(2) << "\n";
  }
  return 0;
}

struct ChatArgs {
  std::string model;
  std::string model_type;
  std::string persona;
  std::string personas;
  std::string reply_pool;
  std::size_t max_len = 15;
};

int cmd_chat(const ChatArgs& a, std::uint64_t seed, std::istream& in, std::ostream& out) {
  const ModelType type = parse_model_type(a.model_type);
  require_file(a.model, "model");
  std::vector<std::string> persona;
  if (!a.persona.empty()) {
    persona = split_bar(a.persona);
  } else if (!a.personas.empty()) {
    require_file(a.personas, "persona corpus");
    const auto pool = collect_personas(load_canonical_file(a.personas));
    if (pool.empty()) throw ValidationError(a.personas + " holds no personas");
    persona = pool[Rng(derive_seed(seed, 0)).index(pool.size())].sentences;
  }
  if (!is_generative(type) && a.reply_pool.empty()) throw ValidationError("ranking models need --reply-pool");

  const ModelSlot slot = load_model(a.model, type);
  std::unique_ptr<ChatModel> bot;
  if (slot.generative) {
    bot = std::make_unique<GenerativeChatModel>(slot.generative, a.max_len);
  } else {
    auto pool = std::make_shared<const std::vector<std::string>>(
        reply_pool_from(load_split(a.reply_pool, Split::train), Split::train));
    bot = std::make_unique<RankingChatModel>(slot.ranker, pool);
  }

  out << "persona:";
  for (const auto& s : persona) out << " " << s;
  out << "\n(type /quit to leave)\n";
  std::vector<std::string> history;
  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line == "/quit") break;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    history.push_back(line);
    const std::string reply = bot->reply(history, persona);
    history.push_back(reply);
    out << reply << "\n";
  }
  out << "\n";
  return 0;
}

struct ServeArgs {
  std::string registry;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
};

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (HttpServer* s = g_server.load()) s->stop();
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  require_file(a.registry, "service config");
  ServiceSetup setup = load_service_config(a.registry);
  const std::string static_dir = a.static_dir.empty() ? setup.static_dir : a.static_dir;
  ChatService service(std::move(setup.models), std::move(setup.personas), std::move(setup.options));
  HttpServer server(service, static_dir);
  const int port = server.bind(a.host, a.port);
  out << "serving on http://" << a.host << ":" << port << "\n" << std::flush;
  g_server.store(&server);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run();
  g_server.store(nullptr);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app("Persona-conditioned dialogue models: corpora, training, evaluation and live chat.", "persona");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "JSON object of flag values for the subcommand; command-line flags win");
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::uint64_t seed = 7;
  app.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();

  const std::string config_note = "Global flags --seed and --config are accepted after the subcommand too.";

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse dialog text files into canonical JSONL and print statistics");
  c_ingest->add_option("--in", ingest.in, "Dialog file, optionally prefixed with its split: train=PATH")->required();
  c_ingest->add_option("--revised", ingest.revised, "Revised-persona file for a split, merged by position");
  c_ingest->add_option("--out", ingest.out, "Canonical JSONL output")->required();
  c_ingest->add_option("--n-candidates", ingest.n_candidates,
                       "Candidates per labeled turn; 0 ignores candidate fields")
      ->capture_default_str();
  c_ingest->footer(config_note);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate the synthetic persona corpus");
  c_synth->add_option("--out", synth.out, "Canonical JSONL output")->required();
  c_synth->add_option("--n-personas", synth.cfg.n_personas, "Distinct personas")->capture_default_str();
  c_synth->add_option("--n-episodes", synth.cfg.n_episodes, "Episodes")->capture_default_str();
  c_synth->add_option("--turns", synth.cfg.turns_per_episode, "Turns per episode")->capture_default_str();
  c_synth->add_option("--n-traits", synth.cfg.n_traits, "Sentences per persona")->capture_default_str();
  c_synth->add_option("--n-candidates", synth.cfg.n_candidates, "Candidates per labeled turn")->capture_default_str();
  c_synth->add_option("--trait-rate", synth.cfg.trait_rate, "Share of replies that mention a persona trait")
      ->capture_default_str();
  c_synth->footer(config_note);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model on the train split of a canonical corpus");
  c_train->add_option("--in", train.in, "Canonical JSONL corpus")->required();
  c_train->add_option("--out", train.out, "Model file; rankers and generators also write <out>.vocab")->required();
  c_train->add_option("--model-type", train.model_type, "Model to train")->required()->check(CLI::IsMember(kModelTypes));
  c_train->add_option("--mode", train.mode, "Persona conditioning")->check(CLI::IsMember(kModes))->capture_default_str();
  c_train->add_option("--variant", train.variant, "Persona variant")->check(CLI::IsMember(kVariants))->capture_default_str();
  c_train->add_option("--split", train.split, "Split to train on")->check(CLI::IsMember(kSplits))->capture_default_str();
  c_train->add_option("--n-candidates", train.n_candidates, "Candidate count when sampling for unlabeled corpora")
      ->capture_default_str();
  c_train->add_option("--epochs", train.epochs, "Training epochs (default: 20 rankers, 30 generators)");
  c_train->add_option("--lr", train.lr, "Learning rate (default: 0.05 rankers, 0.5 generators)");
  c_train->add_option("--dim", train.ranker.dim, "Ranker embedding size")->capture_default_str();
  c_train->add_option("--margin", train.ranker.margin, "Ranker hinge margin")->capture_default_str();
  c_train->add_option("--negatives", train.ranker.negatives, "Ranker negatives per positive")->capture_default_str();
  c_train->add_option("--hops", train.ranker.hops, "Profile attention hops")->capture_default_str();
  c_train->add_option("--top-m", train.top_m, "Key-value memory entries attended")->capture_default_str();
  c_train->add_option("--hidden", train.gen.hidden, "Generator LSTM hidden size")->capture_default_str();
  c_train->add_option("--embed", train.gen.embed, "Generator word embedding size")->capture_default_str();
  c_train->add_option("--clip", train.gen.clip_norm, "Generator gradient clipping norm")->capture_default_str();
  c_train->add_option("--vectors", train.vectors, "Pretrained word vectors for generators (token then values per line)");
  c_train->footer(config_note);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Run the conditioning matrix and print hits@1, perplexity and F1");
  c_eval->add_option("--in", eval.in, "Canonical JSONL corpus")->required();
  c_eval->add_option("--split", eval.split, "Split to evaluate")->check(CLI::IsMember(kSplits))->capture_default_str();
  c_eval->add_option("--model", eval.models,
                     "[NAME:]TYPE=PATH; PATH may contain {mode}, {variant} and {train_variant}")
      ->required();
  c_eval->add_option("--mode", eval.modes, "Conditioning modes")->check(CLI::IsMember(kModes))->capture_default_str();
  c_eval->add_option("--variant", eval.variants, "Persona variants at test time")
      ->check(CLI::IsMember(kVariants))
      ->capture_default_str();
  c_eval->add_option("--train-variant", eval.train_variants, "Persona variants the models were trained on")
      ->check(CLI::IsMember(kVariants))
      ->capture_default_str();
  c_eval->add_option("--side", eval.side, "Only score replies by this speaker")->check(CLI::IsMember(kSpeakers));
  c_eval->add_option("--n-candidates", eval.n_candidates, "Candidates per example, gold included")->capture_default_str();
  c_eval->add_option("--out", eval.out, "Also write one JSON line per metric here");
  c_eval->footer(config_note);

  ProfilePredArgs pp;
  auto* c_pp = app.add_subcommand("profile-pred", "Predict a speaker's persona from their utterances");
  c_pp->add_option("--in", pp.in, "Canonical JSONL corpus with the dialogues")->required();
  c_pp->add_option("--split", pp.split, "Split holding the dialogues")->check(CLI::IsMember(kSplits))->capture_default_str();
  c_pp->add_option("--pool", pp.pool, "Corpus whose personas form the candidate pool (default: --in)");
  c_pp->add_option("--level", pp.level, "Score whole profiles, single sentences, or both")
      ->check(CLI::IsMember({"profile", "sentence", "both"}))
      ->capture_default_str();
  c_pp->add_option("--speaker", pp.speaker, "Speaker whose utterances are observed")
      ->check(CLI::IsMember(kSpeakers))
      ->capture_default_str();
  c_pp->add_option("--target", pp.target, "Speaker whose persona is predicted")
      ->check(CLI::IsMember(kSpeakers))
      ->capture_default_str();
  c_pp->add_option("--variant", pp.variant, "Persona variant")->check(CLI::IsMember(kVariants))->capture_default_str();
  c_pp->add_option("--n-negatives", pp.n_negatives, "Negative personas per dialogue")->capture_default_str();
  c_pp->add_option("--max-length", pp.max_length, "Longest utterance prefix in the error curve")->capture_default_str();
  c_pp->add_option("--out", pp.out, "Also write the results as JSON here");
  c_pp->footer(config_note);

  ChatArgs chat;
  auto* c_chat = app.add_subcommand("chat", "Talk to a model in the terminal");
  c_chat->add_option("--model", chat.model, "Model file")->required();
  c_chat->add_option("--model-type", chat.model_type, "Model type")->required()->check(CLI::IsMember(kModelTypes));
  c_chat->add_option("--persona", chat.persona, "Model persona sentences separated by |");
  c_chat->add_option("--personas", chat.personas, "Corpus to sample the model persona from (by --seed)");
  c_chat->add_option("--reply-pool", chat.reply_pool, "Corpus whose train utterances ranking models reply with");
  c_chat->add_option("--max-len", chat.max_len, "Longest generated reply in tokens")->capture_default_str();
  c_chat->footer(config_note);

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Start the HTTP chat and evaluation service");
  c_serve->add_option("--registry", serve.registry, "Service config: models, persona pool, reply pool, event log")
      ->required();
  c_serve->add_option("--host", serve.host, "Address to bind")->capture_default_str();
  c_serve->add_option("--port", serve.port, "Port to bind")->capture_default_str();
  c_serve->add_option("--static-dir", serve.static_dir, "Directory served at / (overrides the registry)");
  c_serve->footer(config_note);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << "\n" << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, out, err);
    if (c_synth->parsed()) return cmd_synth(synth, seed, out);
    if (c_train->parsed()) return cmd_train(train, seed, out);
    if (c_eval->parsed()) return cmd_eval(eval, seed, out, err);
    if (c_pp->parsed()) return cmd_profile_pred(pp, seed, out);
    if (c_chat->parsed()) return cmd_chat(chat, seed, in, out);
    if (c_serve->parsed()) return cmd_serve(serve, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace persona
