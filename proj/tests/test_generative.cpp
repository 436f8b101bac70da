#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "persona/errors.hpp"
#include "persona/eval.hpp"
#include "persona/generative.hpp"
#include "persona/lstm.hpp"
#include "persona/rng.hpp"

using namespace persona;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vocabulary vocab_of(const std::vector<std::string>& texts) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& t : texts) docs.push_back(tokenize(t));
  return Vocabulary::build(docs);
}

// 14 words plus the unknown slot.
const std::vector<std::string> kWords = {"i like red apples", "you love blue cars", "we see green trees",
                                         "they eat"};

Example example(std::vector<std::string> context, std::vector<std::string> profile, std::string gold) {
  Example ex;
  ex.context = std::move(context);
  ex.profile = std::move(profile);
  ex.gold = gold;
  ex.candidates = {gold};
  return ex;
}

GenConfig tiny(GenMode mode) {
  GenConfig cfg;
  cfg.mode = mode;
  cfg.hidden = 3;
  cfg.embed = 3;
  cfg.init_scale = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("LSTM cell") {
  SUBCASE("zero weights give a zero hidden state") {
    const LstmParams p = LstmParams::zeros(3, 2);
    const LstmState s = cell_step(p, vec({1, -2, 3}), LstmState::zeros(2));
    CHECK(s.h.isZero(0.0));
    CHECK(s.c.isZero(0.0));
  }
  SUBCASE("hand-set weights against the pencil oracle") {
    LstmParams p;
    p.Wx.resize(8, 2);
    p.Wx << 0.1, -0.2, 0.3, 0.4, -0.5, 0.1, 0.2, 0.2, 0.05, -0.1, 0.3, -0.3, 0.2, 0.1, -0.4, 0.6;
    p.Wh.resize(8, 2);
    p.Wh << 0.2, 0.1, -0.1, 0.3, 0.4, -0.2, 0.1, 0.1, -0.3, 0.2, 0.05, 0.05, 0.3, -0.1, 0.2, 0.4;
    p.b = vec({0.01, -0.02, 0.03, 0.5, -0.1, 0.2, 0.0, 0.1});
    const LstmState s = cell_step(p, vec({0.5, -1}), LstmState{vec({0.1, -0.2}), vec({0.3, 0.1})});
    CHECK(s.h[0] == doctest::Approx(0.07767993074393886).epsilon(1e-9));
    CHECK(s.h[1] == doctest::Approx(-0.13382202838746257).epsilon(1e-9));
    CHECK(s.c[0] == doctest::Approx(0.16029421680056478).epsilon(1e-9));
    CHECK(s.c[1] == doctest::Approx(-0.20693760605895826).epsilon(1e-9));
  }
  SUBCASE("one-step backward against finite differences") {
    Rng rng(3);
    LstmParams p = LstmParams::zeros(3, 2);
    for (Mat* m : {&p.Wx, &p.Wh, &p.b})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1, 1);
    Mat x = vec({0.3, -0.7, 0.2});
    Mat h0 = vec({0.1, 0.4}), c0 = vec({-0.2, 0.5});
    const Vec u = vec({0.7, -1.3}), w = vec({0.4, 0.9});
    auto loss = [&] {
      const LstmState s = cell_step(p, x, LstmState{h0, c0});
      return u.dot(s.h) + w.dot(s.c);
    };
    LstmStepCache cache;
    cell_step(p, x, LstmState{h0, c0}, &cache);
    LstmParams g = LstmParams::zeros(3, 2);
    LstmState d_prev = LstmState::zeros(2);
    const Mat dx = cell_step_backward(p, cache, u, w, g, d_prev);
    CHECK(testing::check_gradient(p.Wx, g.Wx, loss).max_rel_error < 1e-4);
    CHECK(testing::check_gradient(p.Wh, g.Wh, loss).max_rel_error < 1e-4);
    CHECK(testing::check_gradient(p.b, g.b, loss).max_rel_error < 1e-4);
    CHECK(testing::check_gradient(x, dx, loss).max_rel_error < 1e-4);
    CHECK(testing::check_gradient(h0, Mat(d_prev.h), loss).max_rel_error < 1e-4);
    CHECK(testing::check_gradient(c0, Mat(d_prev.c), loss).max_rel_error < 1e-4);
  }
}

TEST_CASE("output distribution") {
  const Vec h = vec({0.3, -2.0});
  const Vec uniform = decode_word_dist(Mat::Zero(5, 2), h);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(uniform[i] == doctest::Approx(0.2).epsilon(1e-15));

  Mat Wo(4, 1);
  Wo << 1, 2, 3, 4;
  const Vec p = decode_word_dist(Wo, vec({1}));
  CHECK(p[0] == doctest::Approx(0.032058603280084988).epsilon(1e-12));
  CHECK(p[3] == doctest::Approx(0.64391425988797231).epsilon(1e-12));
  // a constant shift of every logit: add a bias column driven by a unit input
  Mat shifted(4, 2);
  shifted << 1, 7, 2, 7, 3, 7, 4, 7;
  CHECK((decode_word_dist(shifted, vec({1, 1})) - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("profile memory encoding") {
  const Vocabulary v = vocab_of({"beta alpha", "beta gamma", "beta"});
  const ZipfWeights z(v);
  Mat E = Mat::Zero(static_cast<Eigen::Index>(v.size() + 1), 3);
  E.row(to_gen_id(v.id("beta"))) = vec({0.5, -1, 2}).transpose();
  E.row(to_gen_id(v.id("alpha"))) = vec({-0.25, 0.75, 1}).transpose();

  const ProfileMemory single = encode_profile({"beta"}, v, z, E);
  CHECK((single.F.row(0) - z.alpha(v.id("beta")) * E.row(2)).norm() == 0.0);

  // tests/oracles/compute_oracles.py, ranks beta = 1 and alpha = 2
  const ProfileMemory m = encode_profile({"alpha beta", "gamma"}, v, z, E);
  REQUIRE(m.rows() == 2);
  CHECK(m.F(0, 0) == doctest::Approx(0.015984966008313347).epsilon(1e-9));
  CHECK(m.F(0, 1) == doctest::Approx(-0.014206485218280303).epsilon(1e-9));
  CHECK(m.F(0, 2) == doctest::Approx(0.20604743842002452).epsilon(1e-9));
  CHECK(m.F.row(1).isZero(0.0));
}

TEST_CASE("decoder attention step") {
  SUBCASE("single row takes all the weight") {
    Mat F(1, 2);
    F << 0.4, -0.1;
    const AttendResult r = attend_step(F, vec({1, 2}), vec({0, 0}), vec({0, 0}), Mat::Ones(2, 2), Mat::Ones(2, 4));
    CHECK(r.a[0] == 1.0);
    CHECK(r.c == Vec(F.row(0).transpose()));
  }
  SUBCASE("zero attention matrix is uniform") {
    const AttendResult r = attend_step(Mat::Random(3, 2), vec({1, 2}), vec({0, 0}), vec({0, 0}), Mat::Zero(2, 2),
                                       Mat::Zero(2, 4));
    for (int i = 0; i < 3; ++i) CHECK(r.a[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("hand-set values against the pencil oracle") {
    Mat F(2, 2), Wa(2, 2), Wc(2, 4);
    F << 1, 0, 0.5, -1;
    Wa << 1, 0.5, -0.5, 2;
    Wc << 0.5, -0.2, 0.1, 0.3, 0.0, 0.4, -0.6, 0.2;
    const AttendResult r = attend_step(F, vec({0.3, -0.6}), vec({0.2, 0.4}), vec({0.1, -0.3}), Wa, Wc);
    CHECK(r.a[0] == doctest::Approx(0.20587037180094733).epsilon(1e-9));
    CHECK(r.a[1] == doctest::Approx(0.79412962819905267).epsilon(1e-9));
    CHECK(r.c[0] == doctest::Approx(0.60293518590047366).epsilon(1e-9));
    CHECK(r.c[1] == doctest::Approx(-0.79412962819905267).epsilon(1e-9));
    CHECK(r.x_hat[0] == doctest::Approx(0.24491866240370913).epsilon(1e-9));
    CHECK(r.x_hat[1] == doctest::Approx(-0.15864850429749892).epsilon(1e-9));
  }
}

TEST_CASE("full-model gradients match finite differences") {
  const Vocabulary v = vocab_of(kWords);
  REQUIRE(v.size() == 15);
  for (GenMode mode : {GenMode::seq2seq, GenMode::lm, GenMode::profile_memory}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GenConfig cfg = tiny(mode);
      cfg.seed = seed;
      GenerativeModel model(v, cfg);
      const std::vector<GenSequence> batch{
          model.make_sequence({"i like red", "you love"}, {"we see green trees", "they eat"}, "blue cars"),
          model.make_sequence({"they eat"}, {"i like apples", "zebras eat"}, "red unknownword")};
      auto total = [&] {
        double l = 0.0;
        for (const auto& s : batch) l += model.nll(s);
        return l;
      };
      GenParams grad = model.params();
      grad.set_zero();
      double loss = 0.0;
      for (const auto& s : batch) loss += model.nll_and_gradient(s, grad);
      CHECK(loss == doctest::Approx(total()).epsilon(1e-12));
      double worst = 0.0;
      const auto params = model.params().blocks();
      const auto grads = std::as_const(grad).blocks();
      for (std::size_t b = 0; b < params.size(); ++b) {
        const auto gc = testing::check_gradient(*params[b], *grads[b], total);
        if (gc.max_rel_error >= 1e-4)
          MESSAGE("block " << GenParams::block_names()[b] << ": analytic " << gc.analytic << " numeric " << gc.numeric);
        worst = std::max(worst, gc.max_rel_error);
      }
      INFO("mode " << to_string(mode) << " seed " << seed);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("profile memory with an empty profile trains exactly like seq2seq") {
  const Vocabulary v = vocab_of(kWords);
  const std::vector<Example> data{example({"i like"}, {}, "red apples"), example({"you"}, {}, "love blue cars"),
                                  example({}, {}, "they eat")};
  GenConfig a = tiny(GenMode::seq2seq);
  a.epochs = 5;
  GenConfig b = a;
  b.mode = GenMode::profile_memory;
  GenerativeModel s2s(v, a), mem(v, b);
  GenTrainingLog la, lb;
  train_generative(s2s, data, &la);
  train_generative(mem, data, &lb);
  REQUIRE(la.epoch_nll_per_token.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(la.epoch_nll_per_token[i] - lb.epoch_nll_per_token[i]) <= 1e-12);
}

TEST_CASE("training is deterministic") {
  const Vocabulary v = vocab_of(kWords);
  const std::vector<Example> data{example({"i like"}, {"they eat"}, "red apples"), example({"you"}, {}, "love blue")};
  for (GenMode mode : {GenMode::seq2seq, GenMode::lm, GenMode::profile_memory}) {
    GenConfig cfg = tiny(mode);
    cfg.epochs = 3;
    GenerativeModel a(v, cfg), b(v, cfg);
    train_generative(a, data);
    train_generative(b, data);
    const auto pa = a.params().blocks();
    const auto pb = b.params().blocks();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  }
}

TEST_CASE("candidate scoring") {
  const Vocabulary v = vocab_of(kWords);
  SUBCASE("zero model scores -L ln K") {
    for (GenMode mode : {GenMode::seq2seq, GenMode::lm, GenMode::profile_memory}) {
      const GenerativeModel zero = GenerativeModel::zeros(v, tiny(mode));
      const double K = static_cast<double>(zero.output_size());
      CHECK(zero.score_candidate({"i like"}, {"we see"}, "red apples run") ==
            doctest::Approx(-3.0 * std::log(K)).epsilon(1e-14));
    }
    GenConfig norm = tiny(GenMode::seq2seq);
    norm.length_normalize = true;
    const GenerativeModel zero = GenerativeModel::zeros(v, norm);
    CHECK(zero.score_candidate({}, {}, "red apples run") ==
          doctest::Approx(-std::log(static_cast<double>(zero.output_size()))).epsilon(1e-14));
  }
  SUBCASE("greedy choice dominates a one-token perturbation at its step") {
    GenConfig cfg = tiny(GenMode::profile_memory);
    cfg.seed = 11;
    const GenerativeModel model(v, cfg);
    const auto ids = model.greedy_decode_ids({"i like"}, {"they eat"}, 4);
    REQUIRE(!ids.empty());
    GenSequence seq = model.make_sequence({"i like"}, {"they eat"}, "");
    seq.target = ids;
    const auto best = model.token_log_probs(seq);
    for (TokenId alt = 0; alt < model.output_size(); ++alt) {
      if (alt == ids[0]) continue;
      GenSequence other = seq;
      other.target[0] = alt;
      CHECK(model.token_log_probs(other)[0] <= best[0]);
    }
  }
  SUBCASE("empty candidates rank last") {
    auto model = std::make_shared<GenerativeModel>(v, tiny(GenMode::seq2seq));
    const GenerativeRanker ranker(model);
    Example ex = example({"i"}, {}, "red");
    ex.candidates = {"", "red"};
    CHECK(ranker.rank(ex).top() == 1);
  }
}

TEST_CASE("greedy decoding boundaries") {
  const Vocabulary v = vocab_of(kWords);
  const GenerativeModel model(v, tiny(GenMode::seq2seq));
  CHECK(model.greedy_decode({"i like"}, {}, 0).empty());
  CHECK(model.greedy_decode({"i like"}, {}, 5) == model.greedy_decode({"i like"}, {}, 5));
  CHECK(model.greedy_decode_ids({"i like"}, {}, 5).size() <= 5);
}

TEST_CASE("single pair overfits and is decoded back") {
  const Vocabulary v = vocab_of(kWords);
  for (GenMode mode : {GenMode::seq2seq, GenMode::lm, GenMode::profile_memory}) {
    GenConfig cfg;
    cfg.mode = mode;
    cfg.hidden = 16;
    cfg.embed = 16;
    cfg.epochs = 300;
    GenerativeModel model(v, cfg);
    const std::vector<Example> data{example({"you love"}, {"they eat"}, "red apples")};
    train_generative(model, data);
    INFO("mode " << to_string(mode));
    CHECK(perplexity(model, data) < 1.1);
    CHECK(model.greedy_decode(data[0].context, data[0].profile, 15) == "red apples");
  }
}

TEST_CASE("generative files round trip") {
  const Vocabulary v = vocab_of(kWords);
  GenConfig cfg = tiny(GenMode::profile_memory);
  cfg.max_decode_len = 9;
  cfg.length_normalize = true;
  const GenerativeModel model(v, cfg);
  const auto path = (std::filesystem::temp_directory_path() / "persona_test_gen.bin").string();
  save_generative(path, model);
  const auto back = load_generative(path);
  CHECK(back->mode() == GenMode::profile_memory);
  CHECK(back->config().max_decode_len == 9);
  CHECK(back->config().length_normalize);
  const auto pa = model.params().blocks();
  const auto pb = std::as_const(*back).params().blocks();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
  CHECK(back->score_candidate({"i"}, {"they eat"}, "red") == model.score_candidate({"i"}, {"they eat"}, "red"));

  {
    std::ofstream trunc(path, std::ios::binary | std::ios::trunc);
    trunc << "PGEN";
  }
  CHECK_THROWS_AS(load_generative(path), ValidationError);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".vocab");
}

TEST_CASE("pretrained vectors overwrite known rows") {
  const Vocabulary v = vocab_of(kWords);
  GenerativeModel model(v, tiny(GenMode::seq2seq));
  const auto path = (std::filesystem::temp_directory_path() / "persona_test_vectors.txt").string();
  {
    std::ofstream out(path);
    out << "apples 1 2 3\nnotinvocab 4 5 6\n";
  }
  CHECK(load_text_vectors(model, path) == 1);
  CHECK(model.params().E.row(to_gen_id(v.id("apples"))) == vec({1, 2, 3}).transpose());
  {
    std::ofstream out(path);
    out << "apples 1 2\n";
  }
  CHECK_THROWS_AS(load_text_vectors(model, path), ValidationError);
  std::filesystem::remove(path);
}
