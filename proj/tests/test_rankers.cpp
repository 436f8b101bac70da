#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "persona/errors.hpp"
#include "persona/eval.hpp"
#include "persona/ranker_training.hpp"
#include "persona/rankers.hpp"
#include "persona/rng.hpp"
#include "persona/synthetic.hpp"

using namespace persona;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Example make_example(std::vector<std::string> context, std::vector<std::string> profile,
                     std::vector<std::string> candidates, std::size_t gold) {
  Example ex;
  ex.context = std::move(context);
  ex.profile = std::move(profile);
  ex.gold = candidates.at(gold);
  ex.candidates = std::move(candidates);
  return ex;
}

std::vector<std::vector<std::string>> tokenized(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> out;
  for (const auto& t : texts) out.push_back(tokenize(t));
  return out;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
  std::vector<TokenId> out(min_len + rng.index(max_len - min_len + 1));
  for (auto& t : out) t = static_cast<TokenId>(rng.index(vocab));
  return out;
}

SyntheticCorpus small_corpus() {
  SyntheticConfig cfg;
  cfg.n_personas = 10;
  cfg.n_episodes = 40;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("rank_by_scores is stable and sinks NaN") {
  const std::vector<double> s{0.5, 0.9, 0.5, std::nan(""), 0.9};
  const RankResult r = rank_by_scores(s);
  std::vector<std::size_t> order;
  for (const auto& e : r.entries) order.push_back(e.candidate);
  CHECK(order == std::vector<std::size_t>{1, 4, 0, 2, 3});
}

TEST_CASE("IR baseline") {
  const std::vector<std::string> docs{"the cat sat", "the dog sat down", "a cat and a dog"};
  const IrRanker ir(Vocabulary::build(tokenized(docs)));

  SUBCASE("candidate equal to the query scores 1") {
    const RankResult r = ir.rank(make_example({"the dog sat down"}, {}, docs, 1));
    CHECK(r.top() == 1);
    CHECK(r.entries[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("no overlap keeps index order") {
    const RankResult r = ir.rank(make_example({"zebra"}, {}, docs, 0));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(r.entries[i].candidate == i);
      CHECK(r.entries[i].score == 0.0);
    }
  }
  SUBCASE("hand-computed tf-idf cosines") {
    // tests/oracles/compute_oracles.py
    const double expected[] = {0.81649658092772603, 0.3251655485379352, 0.21673120976669459};
    const RankResult r = ir.rank(make_example({"the cat"}, {}, docs, 0));
    for (const auto& e : r.entries) CHECK(e.score == doctest::Approx(expected[e.candidate]).epsilon(1e-9));
  }
  SUBCASE("profile joins the query") {
    const RankResult r = ir.rank(make_example({"zebra"}, {"a dog"}, docs, 2));
    CHECK(r.top() == 2);
  }
}

TEST_CASE("embed_sentence sums rows") {
  Mat W(3, 2);
  W << 1, 2, 3, 4, 5, 6;
  const std::vector<TokenId> one{1}, two{1, 1}, none{};
  CHECK(embed_sentence(one, W) == v2(3, 4));
  CHECK(embed_sentence(two, W) == v2(6, 8));
  CHECK(embed_sentence(none, W) == v2(0, 0));
}

TEST_CASE("margin loss") {
  const std::vector<double> a{0.3}, b{0.4}, inactive{0.0, -0.5, 0.1};
  CHECK(margin_loss(0.9, a, 0.2) == 0.0);
  CHECK(margin_loss(0.1, b, 0.2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(margin_loss(0.9, inactive, 0.2) == 0.0);
}

TEST_CASE("softmax") {
  Vec z(4);
  z << 1, 2, 3, 4;
  const Vec s = softmax(z);
  // tests/oracles/compute_oracles.py
  CHECK(s[0] == doctest::Approx(0.032058603280084988).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.087144318742032567).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(0.23688281808991013).epsilon(1e-12));
  CHECK(s[3] == doctest::Approx(0.64391425988797231).epsilon(1e-12));
  CHECK((softmax(z.array() + 1000.0) - s).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("profile attention") {
  const Vec q = v2(1, 0);
  SUBCASE("single sentence gets weight one") {
    const std::vector<Vec> p{v2(0.3, 2)};
    CHECK((profile_attend(q, p) - (q + p[0])).norm() < 1e-15);
  }
  SUBCASE("equal similarity splits evenly") {
    const std::vector<Vec> p{v2(1, 1), v2(1, -1)};
    CHECK((profile_attend(q, p) - (q + (p[0] + p[1]) / 2)).norm() < 1e-15);
  }
  SUBCASE("three sentences against the pencil oracle") {
    const std::vector<Vec> p{v2(1, 1), v2(0, 2), v2(-1, 0.5)};
    const Vec out = profile_attend(q, p);
    CHECK(out[0] == doctest::Approx(1.471135775777666).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(1.2314777895707992).epsilon(1e-9));
  }
  SUBCASE("empty profile is the identity") {
    CHECK(profile_attend(q, std::vector<Vec>{}, 3) == q);
  }
}

TEST_CASE("key-value attention") {
  SUBCASE("single pair") {
    KvStore store;
    store.entries.push_back({v2(1, 0), v2(2, 3), "x"});
    CHECK((kv_attend(v2(0.5, 0.5), store) - v2(2.5, 3.5)).norm() < 1e-15);
    CHECK((kv_attend(v2(0.5, 0.5), store, false) - v2(2, 3)).norm() < 1e-15);
  }
  KvStore store;
  const Vec keys[] = {v2(1, 0), v2(0, 1), v2(1, 1), v2(-1, 0), v2(0.5, -1)};
  const Vec vals[] = {v2(1, 2), v2(3, -1), v2(0, 1), v2(2, 2), v2(-1, -1)};
  for (int i = 0; i < 5; ++i) store.entries.push_back({keys[i], vals[i], std::to_string(i)});
  const Vec q = v2(1, 0.5);

  SUBCASE("top 2 of 5 against the pencil oracle") {
    store.top_m = 2;
    const Vec out = kv_attend(q, store);
    CHECK(out[0] == doctest::Approx(1.4864392996553769).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(1.9864392996553769).epsilon(1e-9));
  }
  SUBCASE("top_M equal to the store size is untruncated attention") {
    store.top_m = 5;
    const Vec a = kv_attend(q, store);
    store.top_m = kUnlimitedTopM;
    CHECK(kv_attend(q, store) == a);
  }
  SUBCASE("empty store is rejected") {
    CHECK_THROWS_AS(kv_attend(q, KvStore{}), ValidationError);
  }
}

TEST_CASE("ranking gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t vocab = 12;
    Mat W(static_cast<Eigen::Index>(vocab), 5);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.uniform(-1, 1);
    for (bool attention : {false, true}) {
      std::vector<RankingInstance> batch(3);
      for (auto& inst : batch) {
        inst.query = random_tokens(rng, vocab, 1, 4);
        if (attention)
          for (int s = 0; s < 3; ++s) inst.profile.push_back(random_tokens(rng, vocab, 1, 3));
        inst.positive = random_tokens(rng, vocab, 1, 4);
        for (int n = 0; n < 3; ++n) inst.negatives.push_back(random_tokens(rng, vocab, 1, 4));
      }
      // margin large enough that most hinges are active
      const ObjectiveOptions opts{0.8, attention, attention ? 2 : 1};
      auto total = [&] {
        double l = 0.0;
        for (const auto& inst : batch) l += ranking_loss(W, inst, opts);
        return l;
      };
      Mat grad = Mat::Zero(W.rows(), W.cols());
      double loss = 0.0;
      for (const auto& inst : batch) loss += ranking_loss_and_gradient(W, inst, opts, grad);
      CHECK(loss == doctest::Approx(total()).epsilon(1e-12));
      const auto gc = testing::check_gradient(W, grad, total);
      INFO("seed " << seed << " attention " << attention);
      CHECK(gc.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("inactive hinges leave the gradient at zero") {
  Mat W = Mat::Zero(4, 2);
  W.row(1) = v2(1, 0).transpose();
  W.row(2) = v2(0, 1).transpose();
  RankingInstance inst;
  inst.query = {1};
  inst.positive = {1};
  inst.negatives = {{2}, {2, 2}};
  Mat grad = Mat::Zero(4, 2);
  CHECK(ranking_loss_and_gradient(W, inst, ObjectiveOptions{0.2}, grad) == 0.0);
  CHECK(grad.isZero(0.0));
}

TEST_CASE("training") {
  const SyntheticCorpus c = small_corpus();
  const auto train = build_examples(filter_split(c.episodes, Split::train), ExampleOptions{ConditioningMode::self});
  const Vocabulary vocab = Vocabulary::build(vocabulary_documents(c.episodes));
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 3;

  SUBCASE("same seed gives bitwise-identical weights") {
    const auto a = train_ranker(train, vocab, cfg, true);
    const auto b = train_ranker(train, vocab, cfg, true);
    CHECK(a.W == b.W);
    cfg.seed = 8;
    CHECK_FALSE(train_ranker(train, vocab, cfg, true).W == a.W);
  }
  SUBCASE("a step with no active hinge changes nothing") {
    // A single example has no other gold to draw negatives from.
    const std::vector<Example> one{train.front()};
    TrainConfig zero = cfg;
    zero.epochs = 0;
    CHECK(train_ranker(one, vocab, cfg, false).W == train_ranker(one, vocab, zero, false).W);
  }
  SUBCASE("loss goes down") {
    TrainingLog log;
    cfg.epochs = 5;
    train_ranker(train, vocab, cfg, true, &log);
    REQUIRE(log.epoch_loss.size() == 5);
    CHECK(log.epoch_loss.back() < log.epoch_loss.front());
  }
  SUBCASE("bad config is rejected") {
    cfg.margin = 0.0;
    CHECK_THROWS_AS(train_ranker(train, vocab, cfg, false), ValidationError);
  }
}

TEST_CASE("profile memory with no profile equals the plain ranker") {
  const SyntheticCorpus c = small_corpus();
  const auto none = build_examples(filter_split(c.episodes, Split::test), ExampleOptions{ConditioningMode::none});
  const Vocabulary vocab = Vocabulary::build(vocabulary_documents(c.episodes));
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 1;
  const auto emb =
      train_ranker(build_examples(filter_split(c.episodes, Split::train), ExampleOptions{}), vocab, cfg, false);
  const EmbeddingRanker plain(vocab, emb, RankerKind::plain);
  const EmbeddingRanker memory(vocab, emb, RankerKind::profile_memory, 2);
  for (const auto& ex : none) CHECK(plain.rank(ex) == memory.rank(ex));
}

TEST_CASE("trained profile memory finds the trait-bearing reply") {
  const SyntheticCorpus c = small_corpus();
  const auto train = build_examples(filter_split(c.episodes, Split::train), ExampleOptions{ConditioningMode::self});
  const Vocabulary vocab = Vocabulary::build(vocabulary_documents(c.episodes));
  TrainConfig cfg;
  cfg.dim = 32;
  cfg.epochs = 10;
  const EmbeddingRanker model(vocab, train_ranker(train, vocab, cfg, true), RankerKind::profile_memory);
  // Every distractor comes from a persona outside the conversation, so only
  // the gold shares a trait word with the speaker's profile.
  CHECK(hits_at_1(model, train) > 0.8);
}

TEST_CASE("ranker files round trip") {
  const SyntheticCorpus c = small_corpus();
  const auto train = build_examples(filter_split(c.episodes, Split::train), ExampleOptions{ConditioningMode::self});
  const Vocabulary vocab = Vocabulary::build(vocabulary_documents(c.episodes));
  TrainConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 1;
  EmbeddingRanker model(vocab, train_ranker(train, vocab, cfg, true), RankerKind::kv_profile_memory, 2);
  model.attach_kv(kv_build(train, vocab, model.embeddings().W, 7), false);

  const auto path = (std::filesystem::temp_directory_path() / "persona_test_ranker.bin").string();
  save_ranker(path, model);
  const auto back = load_ranker(path);
  CHECK(back->kind() == RankerKind::kv_profile_memory);
  CHECK(back->hops() == 2);
  CHECK(back->embeddings().W == model.embeddings().W);
  CHECK(back->vocab() == vocab);
  REQUIRE(back->kv());
  CHECK(back->kv()->top_m == 7);
  CHECK_FALSE(back->kv_residual());
  CHECK(back->kv()->entries.size() == model.kv()->entries.size());
  const auto test = build_examples(filter_split(c.episodes, Split::test), ExampleOptions{ConditioningMode::self});
  for (const auto& ex : test) CHECK(back->rank(ex) == model.rank(ex));

  // A sidecar from another corpus is refused.
  Vocabulary::build(tokenized({"something else"})).save_file(path + ".vocab");
  CHECK_THROWS_AS(load_ranker(path), ValidationError);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".vocab");
}
