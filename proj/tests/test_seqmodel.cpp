#include "iat/checkpoint.hpp"
#include "iat/seqmodel.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

using namespace iat;
using Span = std::span<TokenId const>;

namespace {

ModelConfig tiny_config(ModelRole role = ModelRole::Forward)
{
  return ModelConfig{7, 3, 4, 6, role};
}

Model<double> uniform_output(ModelConfig c)
{
  auto m = Model<double>::random(c, 11, 0.5);
  m.params.output_weight.setZero();
  m.params.output_bias.setZero();
  return m;
}

std::filesystem::path temp_path(std::string const &name)
{
  return std::filesystem::temp_directory_path() / ("iat_test_" + name);
}

} // namespace

TEST_CASE("flatten_history joins utterances with SEP")
{
  CHECK(flatten_history({{5, 6}, {7}}) == TokenSeq{5, 6, 4, 7});
  CHECK(flatten_history({{5}}) == TokenSeq{5});
  CHECK_THROWS_AS(flatten_history({}), PreconditionError);
}

TEST_CASE("encode is deterministic and depends on the input")
{
  auto m = Model<double>::random(tiny_config(), 3, 0.5);
  TokenSeq a{5}, b{6};
  CHECK(encode(m, Span(a)) == encode(m, Span(a)));
  CHECK((encode(m, Span(a)) - encode(m, Span(b))).norm() > 1e-6);

  TokenSeq bad{7};
  CHECK_THROWS_AS(encode(m, Span(bad)), RangeError);
  CHECK_THROWS_AS(encode(m, Span()), PreconditionError);

  auto zero = Model<double>::zeros(tiny_config());
  TokenSeq longer{5, 6, 4, 5, 6};
  // zero weights: z = r = 1/2, n = 0, so h_t = h_{t-1} / 2 = 0 from a zero start
  CHECK(encode(zero, Span(a)) == encode(zero, Span(longer)));
  CHECK(encode(zero, Span(a)).isZero());
}

TEST_CASE("uniform output parameters give -log V for every token")
{
  auto m = uniform_output(tiny_config());
  auto lp = sequence_log_probs(m, {{5, 6}, {6}}, {5, 5, 6});
  REQUIRE(lp.size() == 4);
  for (double v : lp) {
    CHECK(v == doctest::Approx(-std::log(7.0)).epsilon(1e-14));
  }
}

TEST_CASE("decoder distributions are normalized")
{
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto m = Model<double>::random(tiny_config(), seed, 1.0);
    auto mf = Model<float>{m.config, m.params.cast<float>()};
    TokenSeq src{5, 6, 4, 6};
    auto h = initial_state(m, Span(src));
    auto hf = initial_state(mf, Span(src));
    for (TokenId prev : {kBos, 5, 6, 2}) {
      h = detail::gru_step(m.params.decoder, m.params.embedding, prev, h);
      hf = detail::gru_step(mf.params.decoder, mf.params.embedding, prev, hf);
      double s = detail::log_softmax(detail::output_logits(m.params, h)).array().exp().sum();
      float  sf = detail::log_softmax(detail::output_logits(mf.params, hf)).array().exp().sum();
      CHECK(std::abs(s - 1.0) < 1e-12);
      CHECK(std::abs(sf - 1.0f) < 1e-6f);
    }
  }
}

TEST_CASE("log-probabilities are non-positive and sum to the forced score")
{
  auto m = Model<double>::random(tiny_config(), 5, 1.0);
  TokenSeq src{5, 6};
  auto g = greedy_decode(m, Span(src));
  auto lp = decoder_log_probs(m, Span(src), Span(g.tokens));
  double s = 0.0;
  for (double v : lp) {
    CHECK(v <= 0.0);
    s += v;
  }
  CHECK(s == g.score);
}

TEST_CASE("response LM ignores the history and backward model swaps roles")
{
  auto lm = Model<double>::random(tiny_config(ModelRole::ResponseLm), 8, 0.8);
  auto a = sequence_log_probs(lm, {{5, 6}}, {6, 5});
  auto b = sequence_log_probs(lm, {{6}, {5, 5, 5}}, {6, 5});
  CHECK(a == b);

  auto bwd = Model<double>::random(tiny_config(ModelRole::Backward), 8, 0.8);
  auto fwd = Model<double>{tiny_config(ModelRole::Forward), bwd.params};
  DialogueHistory hist{{5, 6}, {6}};
  Utterance       resp{6, 5};
  auto            via_role = sequence_log_probs(bwd, hist, resp);
  TokenSeq        target = with_eos(flatten_history(hist));
  auto            direct = decoder_log_probs(fwd, Span(resp), Span(target));
  CHECK(via_role == direct);
  CHECK(via_role.size() == 5);
}

TEST_CASE("backward matches central finite differences")
{
  // vocab 7, embed 3, hidden 4, double precision, step 1e-4
  for (auto role : {ModelRole::Forward, ModelRole::Backward, ModelRole::ResponseLm}) {
    CAPTURE(to_string(role));
    auto model = Model<double>::random(tiny_config(role), 21, 0.8);
    Rng  rng(4);
    for (int trial = 0; trial < 3; ++trial) {
      auto ex = oracle::random_example(rng, 7, 3, 4);
      auto io = model_io(role, ex.history, ex.response);
      std::vector<double> w(io.target.size());
      for (auto &v : w) v = uniform01(rng) * 2.0 - 1.0;
      std::vector<WeightedSequence<double>> batch{{io.source, io.target, w}};
      auto analytic = backward(model, std::span<WeightedSequence<double> const>(batch));
      auto numeric = oracle::finite_difference_gradient(model, [&](Model<double> const &m) {
        auto lp = decoder_log_probs(m, Span(io.source), Span(io.target));
        double s = 0.0;
        for (std::size_t i = 0; i < lp.size(); ++i) s += w[i] * lp[i];
        return s;
      }, 1e-4);
      for (auto const &[name, err] : oracle::relative_errors(analytic, numeric)) {
        CAPTURE(name);
        CHECK(err < 1e-5);
      }
    }
  }
}

TEST_CASE("backward with zero weights is zero; -1 weights give the NLL gradient")
{
  auto model = Model<double>::random(tiny_config(), 2, 0.5);
  TokenSeq src{5, 6}, tgt{6, 5, 2};
  std::vector<WeightedSequence<double>> zero{{src, tgt, {0, 0, 0}}};
  CHECK(squared_norm(backward(model, std::span<WeightedSequence<double> const>(zero))) == 0.0);

  std::vector<WeightedSequence<double>> neg{{src, tgt, {-1, -1, -1}}}, pos{{src, tgt, {1, 1, 1}}};
  auto g_neg = backward(model, std::span<WeightedSequence<double> const>(neg));
  auto g_pos = backward(model, std::span<WeightedSequence<double> const>(pos));
  g_pos *= -1.0;
  CHECK(squared_norm(g_neg) > 0.0);
  g_neg *= -1.0;
  g_neg += g_pos;
  CHECK(squared_norm(g_neg) < 1e-24);
}

TEST_CASE("greedy decoding")
{
  SUBCASE("uniform output emits id 0 up to the length cap")
  {
    auto m = uniform_output(tiny_config());
    TokenSeq src{5};
    auto h = greedy_decode(m, Span(src));
    CHECK(h.tokens == TokenSeq(6, 0));
    CHECK(h.score == doctest::Approx(-6 * std::log(7.0)));
  }
  SUBCASE("equals beam search of width 1")
  {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto m = Model<double>::random(tiny_config(), seed, 1.5);
      TokenSeq src{5, 6, 4, 5};
      auto g = greedy_decode(m, Span(src));
      auto b = beam_search(m, Span(src), 1, 1);
      REQUIRE(b.size() == 1);
      CHECK(g == b.front());
      CHECK(g == greedy_decode(m, Span(src)));
    }
  }
}

TEST_CASE("beam search agrees with exhaustive enumeration")
{
  // vocab 4 and max length 3 give 40 complete sequences, all inside a width-64 beam
  ModelConfig c{4, 3, 4, 3, ModelRole::Forward};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = Model<double>::random(c, seed, 1.5);
    TokenSeq src{3, 0};
    auto all = oracle::enumerate_sequences(m, Span(src));
    CHECK(all.size() == 40);
    auto beam = beam_search(m, Span(src), 64, 40);
    REQUIRE(beam.size() == 40);
    CHECK(beam.front().tokens == all.front().tokens);
    CHECK(beam.front().score == doctest::Approx(all.front().score).epsilon(1e-12));
    for (std::size_t i = 1; i < beam.size(); ++i) {
      CHECK(beam[i - 1].score >= beam[i].score);
    }
  }
}

TEST_CASE("beam search contracts")
{
  auto m = Model<double>::random(tiny_config(), 4, 1.0);
  TokenSeq src{5, 6};
  CHECK_THROWS_AS(beam_search(m, Span(src), 2, 3), PreconditionError);
  CHECK_THROWS_AS(beam_search(m, Span(src), 2, 0), PreconditionError);
  auto hyps = beam_search(m, Span(src), 5, 5);
  for (auto const &h : hyps) {
    CHECK(h.tokens.size() <= 6);
    CHECK(h.score <= 0.0);
    CHECK(h.score == doctest::Approx(decoder_log_prob(m, Span(src), Span(h.tokens))).epsilon(1e-12));
  }
}

TEST_CASE("beam width monotonicity on random tiny models")
{
  std::size_t violations = 0, cases = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto m = Model<double>::random(ModelConfig{6, 3, 4, 4, ModelRole::Forward}, seed, 1.5);
    TokenSeq src{5, 3};
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t w = 1; w <= 8; ++w) {
      double best = beam_search(m, Span(src), w, 1).front().score;
      ++cases;
      violations += best < prev ? 1 : 0;
      prev = std::max(prev, best);
    }
  }
  MESSAGE("width-monotonicity violations: " << violations << " of " << cases);
  CHECK(violations == 0);
}

TEST_CASE("sampling")
{
  auto m = Model<double>::random(tiny_config(), 9, 1.5);
  TokenSeq src{5, 6};

  SUBCASE("fixed seed reproduces the sample")
  {
    Rng a(17), b(17);
    CHECK(sample_decode(m, Span(src), 1.0, a) == sample_decode(m, Span(src), 1.0, b));
  }
  SUBCASE("near-zero temperature matches greedy")
  {
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng rng(s);
      CHECK(sample_decode(m, Span(src), 1e-6, rng).tokens == greedy_decode(m, Span(src)).tokens);
    }
  }
  SUBCASE("score is the temperature-1 log-probability")
  {
    Rng  rng(3);
    auto h = sample_decode(m, Span(src), 0.7, rng);
    CHECK(h.score == doctest::Approx(decoder_log_prob(m, Span(src), Span(h.tokens))).epsilon(1e-12));
  }
  SUBCASE("single-step frequencies match the softmax")
  {
    ModelConfig c{5, 3, 4, 2, ModelRole::Forward};
    auto m5 = Model<double>::random(c, 12, 1.5);
    TokenSeq src5{3, 4};
    std::vector<double> exact(5);
    for (TokenId k = 0; k < 5; ++k) {
      TokenSeq t{k};
      exact[static_cast<std::size_t>(k)] = std::exp(decoder_log_probs(m5, Span(src5), Span(t)).front());
    }
    std::vector<double> freq(5, 0.0);
    Rng rng(2024);
    int const n = 50000;
    for (int i = 0; i < n; ++i) {
      freq[static_cast<std::size_t>(sample_decode(m5, Span(src5), 1.0, rng).tokens.front())] += 1.0 / n;
    }
    for (std::size_t k = 0; k < 5; ++k) {
      CAPTURE(k);
      CHECK(std::abs(freq[k] - exact[k]) < 0.01);
    }
  }
  CHECK_THROWS_AS([&] { Rng r(1); sample_decode(m, Span(src), 0.0, r); }(), PreconditionError);
}

TEST_CASE("checkpoints")
{
  auto path = temp_path("ckpt.bin");

  SUBCASE("round trip is bit-exact and keeps the role")
  {
    auto m = Model<float>::random(tiny_config(ModelRole::Backward), 31, 0.3);
    save_checkpoint(m, path);
    auto back = load_checkpoint<float>(path);
    CHECK(back.config == m.config);
    visit_tensors([](std::string_view, auto const &a, auto const &b) {
      CHECK(std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(float)) == 0);
    }, m.params, back.params);

    auto md = Model<double>::random(tiny_config(), 32, 0.3);
    save_checkpoint(md, path);
    auto backd = load_checkpoint<double>(path);
    visit_tensors([](std::string_view, auto const &a, auto const &b) { CHECK(a == b); }, md.params, backd.params);
  }
  SUBCASE("truncated file is reported as corrupt")
  {
    save_checkpoint(Model<float>::random(tiny_config(), 1), path);
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 9);
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointCorruptError);
    std::filesystem::resize_file(path, 20);
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointCorruptError);
  }
  SUBCASE("version and shape errors are distinct")
  {
    save_checkpoint(Model<float>::random(tiny_config(), 1), path);
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(7);
      f.put('9');
    }
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointVersionError);

    save_checkpoint(Model<float>::random(tiny_config(), 1), path);
    auto other = Model<float>::zeros(ModelConfig{8, 3, 4, 6, ModelRole::Forward});
    CHECK_THROWS_AS(load_checkpoint_into(path, other), CheckpointShapeError);
    auto same = Model<float>::zeros(tiny_config());
    CHECK_NOTHROW(load_checkpoint_into(path, same));
  }
  SUBCASE("header layout")
  {
    save_checkpoint(Model<float>::random(tiny_config(), 1), path);
    std::ifstream in(path, std::ios::binary);
    std::string   magic(8, '\0');
    in.read(magic.data(), 8);
    CHECK(magic == "IATCKPT1");
    std::string header;
    std::getline(in, header);
    auto j = nlohmann::json::parse(header);
    CHECK(j["dtype"] == "f32");
    CHECK(j["tensors"].size() == 9);
    CHECK(j["tensors"][0]["name"] == "embedding");
    CHECK(j["tensors"][0]["shape"] == nlohmann::json{7, 3});
    CHECK(j["config"]["role"] == "forward");
  }
  std::filesystem::remove(path);
}
