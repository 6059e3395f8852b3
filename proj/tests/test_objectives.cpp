#include "iat/objectives.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace iat;
using Span = std::span<TokenId const>;

namespace {

ModelConfig tiny(ModelRole role = ModelRole::Forward) { return ModelConfig{7, 3, 4, 6, role}; }

Model<double> uniform_output(ModelConfig c)
{
  auto m = Model<double>::random(c, 1, 0.5);
  m.params.output_weight.setZero();
  m.params.output_bias.setZero();
  return m;
}

double dot(Parameters<double> const &a, Parameters<double> const &b)
{
  double s = 0.0;
  visit_tensors([&](std::string_view, auto const &x, auto const &y) { s += x.cwiseProduct(y).sum(); }, a, b);
  return s;
}

} // namespace

TEST_CASE("nll")
{
  auto u = uniform_output(tiny());
  DialogueHistory h{{5, 6}, {6}};
  CHECK(nll(u, h, Utterance{5, 6}) == doctest::Approx(3.0 * std::log(7.0)).epsilon(1e-14));

  auto m = Model<double>::random(tiny(), 3, 1.0);
  Rng  rng(1);
  for (int i = 0; i < 50; ++i) {
    auto ex = oracle::random_example(rng, 7, 2, 4);
    double a = nll(m, ex.history, ex.response);
    CHECK(a >= 0.0);
    CHECK(a == nll(m, ex.history, ex.response));
  }
}

TEST_CASE("reward records")
{
  auto r = make_reward_record(3.0, 4.0, 1.0);
  CHECK(r.reward == 1.0);
  CHECK(r.penalty == 0.0);

  r = make_reward_record(3.0, 3.2, 1.0);
  CHECK(r.reward == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r.penalty == doctest::Approx(-0.8).epsilon(1e-15));

  CHECK_THROWS_AS(make_reward_record(1.0, 2.0, -0.1), PreconditionError);

  auto m = Model<double>::random(tiny(), 4, 1.0);
  DialogueHistory h{{5, 6}, {6, 5}};
  auto same = reward(m, h, h, Utterance{6}, ObjectiveOptions{0.7});
  CHECK(same.reward == 0.0);
  CHECK(same.penalty == -0.7);

  DialogueHistory p{{6, 5}, {5, 6}};
  auto fwd = reward(m, h, p, Utterance{6, 5});
  auto bwd = reward(m, p, h, Utterance{6, 5});
  CHECK(fwd.reward == -bwd.reward);
  CHECK(fwd.reward != 0.0);

  auto norm = reward(m, h, p, Utterance{6, 5}, ObjectiveOptions{1.0, true});
  CHECK(norm.reward == doctest::Approx(fwd.reward / 3.0).epsilon(1e-12));
}

TEST_CASE("reward algebra over random inputs")
{
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    double a = uniform01(rng) * 20.0, b = uniform01(rng) * 20.0, margin = uniform01(rng) * 3.0;
    auto   r = make_reward_record(a, b, margin);
    auto   s = make_reward_record(b, a, margin);
    CHECK(r.reward == b - a);
    CHECK(r.penalty == std::min(0.0, (b - a) - margin));
    CHECK(r.reward == -s.reward);
    CHECK((r.penalty == 0.0) == (r.reward >= margin));
    CHECK(r.penalty <= 0.0);
    CHECK(r.penalty >= -margin - std::abs(r.reward));
  }
}

TEST_CASE("iat gradient")
{
  auto model = Model<double>::random(tiny(), 5, 0.8);
  DialogueHistory h{{5, 6, 5}, {6}}, p{{6}, {5, 6, 5}};
  Utterance       y{6, 5, 6};
  auto const      src = flatten_history(h), adv = flatten_history(p), tgt = with_eos(y);

  SUBCASE("zero scalars give zero gradient")
  {
    auto g = Gradients<double>::zeros(model.config);
    accumulate_iat_gradient(model, Span(src), Span(adv), Span(tgt), 0.0, 0.0, g);
    CHECK(squared_norm(g) == 0.0);

    auto same = iat_gradient(model, h, h, y, ObjectiveOptions{0.0});
    CHECK(squared_norm(same) == 0.0);
  }
  SUBCASE("penalty-free case isolates the reward term")
  {
    RewardRecord r;
    auto g = iat_gradient(model, h, p, y, ObjectiveOptions{0.0}, &r);
    REQUIRE(r.reward > 0.0);
    REQUIRE(r.penalty == 0.0);
    std::vector<WeightedSequence<double>> one{{src, tgt, std::vector<double>(tgt.size(), r.reward)}};
    auto expect = backward(model, std::span<WeightedSequence<double> const>(one));
    expect *= -1.0;
    expect += g;
    CHECK(squared_norm(expect) < 1e-26);
  }
  SUBCASE("frozen-scalar finite differences")
  {
    for (double margin : {0.0, 1.0, 5.0}) {
      RewardRecord r;
      auto g = iat_gradient(model, h, p, y, ObjectiveOptions{margin}, &r);
      auto f = [&](Model<double> const &m) {
        return r.reward * decoder_log_prob(m, Span(src), Span(tgt)) + r.penalty * decoder_log_prob(m, Span(adv), Span(tgt));
      };
      auto numeric = oracle::finite_difference_gradient(model, f, 1e-4);
      for (auto const &[name, err] : oracle::relative_errors(g, numeric)) {
        CAPTURE(name);
        CHECK(err < 1e-5);
      }

      // directional derivative along a random direction
      auto   dir = Parameters<double>::random(model.config, 99, 1.0);
      double const eps = 1e-5;
      auto   up = model, down = model;
      auto   step = dir;
      step *= eps;
      up.params += step;
      step *= -1.0;
      down.params += step;
      double fd = (f(up) - f(down)) / (2.0 * eps);
      double an = dot(g, dir);
      CHECK(std::abs(fd - an) <= 1e-5 * std::max(std::abs(fd), std::abs(an)));
    }
  }
}

TEST_CASE("mmi-anti scoring")
{
  auto fwd = Model<double>::random(tiny(), 6, 1.0);
  auto lm = Model<double>::random(tiny(ModelRole::ResponseLm), 7, 1.0);
  DialogueHistory h{{5, 6}};
  Utterance       y{6, 5};
  auto const src = flatten_history(h);
  auto const tgt = with_eos(y);
  CHECK(mmi_anti_score(fwd, lm, h, y, 0.0) == decoder_log_prob(fwd, Span(src), Span(tgt)));
  CHECK(mmi_anti_score(fwd, lm, h, y, 0.5) ==
        doctest::Approx(decoder_log_prob(fwd, Span(src), Span(tgt)) - 0.5 * decoder_log_prob(lm, {}, Span(tgt))).epsilon(1e-14));

  auto uf = uniform_output(tiny());
  auto ul = uniform_output(tiny(ModelRole::ResponseLm));
  CHECK(std::abs(mmi_anti_score(uf, ul, h, y, 1.0)) < 1e-12);
  CHECK_THROWS_AS(mmi_anti_score(fwd, lm, h, y, -1.0), PreconditionError);

  // equal forward scores: the response with the higher LM score loses ground as lambda grows
  Utterance a{5}, b{6};
  double la = decoder_log_prob(lm, {}, Span(with_eos(a))), lb = decoder_log_prob(lm, {}, Span(with_eos(b)));
  auto   gap = [&](double lambda) { return (-lambda * la) - (-lambda * lb); };
  if (la > lb) {
    CHECK(gap(1.0) < gap(0.5));
  } else {
    CHECK(gap(1.0) > gap(0.5));
  }
}

TEST_CASE("mmi-bidi reranking")
{
  std::vector<Hypothesis> nbest{{{5, 2}, -1.0}, {{6, 2}, -2.0}, {{7, 2}, -3.0}};
  std::vector<double>     back{-3.0, -1.0, -2.0};
  auto ranked = rerank_with_backward(nbest, back, 1.0);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].hypothesis == nbest[1]);
  CHECK(ranked[1].hypothesis == nbest[0]);
  CHECK(ranked[2].hypothesis == nbest[2]);
  CHECK(ranked[0].combined == -3.0);
  CHECK(ranked[1].combined == -4.0);
  CHECK(ranked[2].combined == -5.0);

  auto kept = rerank_with_backward(nbest, back, 0.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(kept[i].hypothesis == nbest[i]);

  std::vector<Hypothesis> ties{{{5, 2}, -1.0}, {{6, 2}, -1.0}};
  std::vector<double>     tie_back{-1.0, -1.0};
  auto tied = rerank_with_backward(ties, tie_back, 1.0);
  CHECK(tied[0].hypothesis == ties[0]);

  auto bwd = Model<double>::random(tiny(ModelRole::Backward), 8, 1.0);
  DialogueHistory h{{5, 6}, {6}};
  std::vector<Hypothesis> single{{{5, 2}, -1.5}};
  auto one = mmi_bidi_rerank(bwd, h, std::span<Hypothesis const>(single), 0.7);
  REQUIRE(one.size() == 1);
  CHECK(one[0].hypothesis == single[0]);
  TokenSeq src{5}, target = with_eos(flatten_history(h));
  CHECK(one[0].combined == doctest::Approx(-1.5 + 0.7 * decoder_log_prob(bwd, Span(src), Span(target))).epsilon(1e-14));

  auto fwd_role = Model<double>::random(tiny(), 8, 1.0);
  CHECK_THROWS_AS(mmi_bidi_rerank(fwd_role, h, std::span<Hypothesis const>(single), 1.0), ConfigError);
  CHECK_THROWS_AS(rerank_with_backward({}, {}, 1.0), PreconditionError);
}

TEST_CASE("batch stats")
{
  std::vector<RewardRecord>     rs{make_reward_record(1, 3, 1), make_reward_record(1, 1.5, 1)};
  std::vector<PerturbationKind> ks{PerturbationKind::Rev, PerturbationKind::Rev};
  auto s = IatBatchStats::summarize(rs, ks);
  CHECK(s.mean_reward == doctest::Approx(1.25));
  CHECK(s.mean_penalty == doctest::Approx(-0.25));
  CHECK(s.zero_penalty_fraction == 0.5);
  CHECK(s.kind_counts[static_cast<std::size_t>(PerturbationKind::Rev)] == 2);
}
