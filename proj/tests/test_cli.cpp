#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "persona/cli.hpp"

using namespace persona;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run_cli(args, in, out, err);
  return Run{code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "persona_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kFixture = std::string(PERSONA_FIXTURES) + "/dialog_sample.txt";

}  // namespace

TEST_CASE("help on every subcommand documents its flags") {
  const std::map<std::string, std::vector<std::string>> flags = {
      {"ingest", {"--in", "--revised", "--out", "--n-candidates"}},
      {"synth", {"--out", "--n-personas", "--n-episodes", "--turns", "--n-traits", "--n-candidates", "--trait-rate"}},
      {"train", {"--in", "--out", "--model-type", "--mode", "--variant", "--split", "--epochs", "--lr", "--dim", "--hidden"}},
      {"eval", {"--in", "--split", "--model", "--mode", "--variant", "--train-variant", "--side", "--n-candidates", "--out"}},
      {"profile-pred", {"--in", "--pool", "--level", "--speaker", "--target", "--n-negatives", "--max-length"}},
      {"chat", {"--model", "--model-type", "--persona", "--personas", "--reply-pool", "--max-len"}},
      {"serve", {"--registry", "--host", "--port", "--static-dir"}},
  };
  for (const auto& [sub, names] : flags) {
    const Run r = cli({sub, "--help"});
    CHECK_MESSAGE(r.code == 0, sub);
    for (const auto& f : names) CHECK_MESSAGE(r.out.find(f) != std::string::npos, std::string(sub + " " + f));
    CHECK(r.out.find("--seed") != std::string::npos);
  }
  const Run top = cli({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out.find("--config") != std::string::npos);
}

TEST_CASE("usage errors exit 1 with usage on stderr") {
  const Run none = cli({});
  CHECK(none.code == 1);
  CHECK(none.err.find("Usage") != std::string::npos);
  const Run flag = cli({"synth", "--out", "x.jsonl", "--bogus"});
  CHECK(flag.code == 1);
  CHECK(flag.err.find("Usage") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"train", "--in", "a", "--out", "b", "--model-type", "transformer"}).code == 1);
}

TEST_CASE("ingest the fixture") {
  const fs::path dir = scratch("ingest");
  const Run r = cli({"ingest", "--in", kFixture, "--out", (dir / "corpus.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("episodes: 2\n") != std::string::npos);
  CHECK(r.out.find("utterances: 9\n") != std::string::npos);
  CHECK(r.out.find("personas: 4\n") != std::string::npos);
  CHECK(fs::file_size(dir / "corpus.jsonl") > 0);

  const Run with_split = cli({"ingest", "--in", "test=" + kFixture, "--n-candidates", "20", "--out",
                              (dir / "test.jsonl").string()});
  CHECK(with_split.code == 0);
  CHECK(with_split.out.find("test: 2 episodes, 9 utterances") != std::string::npos);

  CHECK(cli({"ingest", "--in", (dir / "missing.txt").string(), "--out", (dir / "x.jsonl").string()}).code == 1);
  CHECK(cli({"ingest", "--in", kFixture, "--out", (dir / "no/such/dir/x.jsonl").string()}).code == 1);
  // the target is a directory: the write itself fails
  fs::create_directories(dir / "occupied");
  CHECK(cli({"ingest", "--in", kFixture, "--out", (dir / "occupied").string()}).code == 2);
}

TEST_CASE("synth is deterministic per seed") {
  const fs::path dir = scratch("synth");
  const auto run = [&](const std::string& name, const std::string& seed) {
    return cli({"synth", "--seed", seed, "--n-episodes", "20", "--out", (dir / name).string()});
  };
  CHECK(run("a.jsonl", "7").code == 0);
  CHECK(run("b.jsonl", "7").code == 0);
  CHECK(run("c.jsonl", "8").code == 0);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(slurp(dir / "a.jsonl") != slurp(dir / "c.jsonl"));
}

TEST_CASE("config file sits under the flags") {
  const fs::path dir = scratch("config");
  {
    std::ofstream(dir / "cfg.json") << R"({"out": ")" << (dir / "from_config.jsonl").string()
                                    << R"(", "n-personas": 6, "n-episodes": 10, "seed": 3})";
  }
  const Run r = cli({"synth", "--config", (dir / "cfg.json").string(), "--n-episodes", "5"});
  CHECK(r.code == 0);
  CHECK(r.out.find("episodes: 5\n") != std::string::npos);
  CHECK(r.out.find("personas: 6\n") != std::string::npos);
  CHECK(cli({"synth", "--seed", "3", "--n-personas", "6", "--n-episodes", "5", "--out", (dir / "flags.jsonl").string()})
            .code == 0);
  CHECK(slurp(dir / "from_config.jsonl") == slurp(dir / "flags.jsonl"));

  { std::ofstream(dir / "bad.json") << R"({"out": "x.jsonl", "colour": "blue"})"; }
  const Run bad = cli({"synth", "--config", (dir / "bad.json").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("colour") != std::string::npos);
}

TEST_CASE("train, eval, profile-pred and chat") {
  const fs::path dir = scratch("pipeline");
  const std::string corpus = (dir / "corpus.jsonl").string();
  REQUIRE(cli({"synth", "--n-personas", "8", "--n-episodes", "30", "--out", corpus}).code == 0);

  for (const std::string type : {"ir", "ranker", "profile-mem", "kv-profile-mem"}) {
    const Run r = cli({"train", "--in", corpus, "--out", (dir / (type + ".model")).string(), "--model-type", type,
                       "--epochs", "2", "--dim", "16"});
    CHECK_MESSAGE(r.code == 0, std::string(type + ": " + r.err));
  }
  const Run gen = cli({"train", "--in", corpus, "--out", (dir / "lm.model").string(), "--model-type", "lm", "--epochs",
                       "1", "--hidden", "8", "--embed", "8"});
  CHECK(gen.code == 0);
  CHECK(gen.out.find("epoch 1 nll/token") != std::string::npos);

  SUBCASE("eval leaves missing models empty") {
    const std::string jsonl = (dir / "eval.jsonl").string();
    const Run r = cli({"eval", "--in", corpus, "--model", "pm:profile-mem=" + (dir / "profile-mem.model").string(),
                       "--model", "lm=" + (dir / "lm.model").string(), "--model",
                       "gone:ranker=" + (dir / "absent_{mode}.model").string(), "--out", jsonl});
    CHECK(r.code == 0);
    CHECK(r.err.find("warning") != std::string::npos);
    CHECK(r.err.find("absent_self.model") != std::string::npos);
    CHECK(r.out.find("gone [train original]") != std::string::npos);
    CHECK(r.out.find("no persona") != std::string::npos);
    std::ifstream in(jsonl);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      // empty cells are kept, with a null value
      CHECK(j["value"].is_null() == (j["model"] == "gone"));
      ++rows;
    }
    // pm: 2 cells x hits@1, lm: 2 cells x (hits@1, ppl, f1), gone: 2 empty cells
    CHECK(rows == 10);
  }
  SUBCASE("eval rejects malformed model specs") {
    CHECK(cli({"eval", "--in", corpus, "--model", "no-equals-sign"}).code == 1);
    CHECK(cli({"eval", "--in", corpus, "--model", "x=y", "--n-candidates", "1"}).code == 1);
  }
  SUBCASE("wrong model type for a file") {
    const Run r = cli({"eval", "--in", corpus, "--model", "seq2seq=" + (dir / "lm.model").string()});
    CHECK(r.code == 1);
  }
  SUBCASE("profile prediction") {
    const Run r = cli({"profile-pred", "--in", corpus, "--n-negatives", "5", "--level", "sentence", "--out",
                       (dir / "pp.json").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("sentence-level") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "pp.json"));
    CHECK(j[0]["error_by_length"].size() == 8);
    CHECK(cli({"profile-pred", "--in", corpus, "--n-negatives", "500"}).code == 1);
  }
  SUBCASE("chat") {
    const Run r = cli({"chat", "--model", (dir / "ranker.model").string(), "--model-type", "ranker", "--personas", corpus,
                       "--reply-pool", corpus},
                      "hello\n\nwhat do you like\n/quit\nnot read\n");
    CHECK(r.code == 0);
    CHECK(r.out.find("persona: ") != std::string::npos);
    // one reply per non-empty line before /quit
    std::istringstream lines(r.out);
    std::string line;
    std::size_t replies = 0;
    while (std::getline(lines, line))
      if (line.rfind("> ", 0) == 0 && line.size() > 2) ++replies;
    CHECK(replies == 2);

    const Run g = cli({"chat", "--model", (dir / "lm.model").string(), "--model-type", "lm", "--persona",
                       "i like tea | i have a cat"},
                      "hi\n");
    CHECK(g.code == 0);
    CHECK(g.out.find("persona: i like tea i have a cat") != std::string::npos);
    CHECK(cli({"chat", "--model", (dir / "ranker.model").string(), "--model-type", "ranker"}).code == 1);
  }
}

TEST_CASE("serve validates its registry before binding") {
  const fs::path dir = scratch("serve");
  CHECK(cli({"serve", "--registry", (dir / "missing.json").string()}).code == 1);
  { std::ofstream(dir / "reg.json") << R"({"models": {}, "personas": "nope.jsonl"})"; }
  CHECK(cli({"serve", "--registry", (dir / "reg.json").string()}).code == 1);
}
