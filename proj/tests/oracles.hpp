#pragma once

// Reference computations used to freeze expected values in tests. They go
// through the forward pass only, never through the analytic gradient or the
// search code under test.

#include "iat/corpus.hpp"
#include "iat/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

namespace oracle {

using namespace iat;

inline Example random_example(Rng &rng, std::size_t vocab, std::size_t turns, std::size_t max_len)
{
  auto utt = [&] {
    Utterance u(uniform_int<std::size_t>(rng, 1, max_len));
    for (auto &t : u) t = uniform_int<TokenId>(rng, kNumReserved, static_cast<TokenId>(vocab) - 1);
    return u;
  };
  Example ex;
  for (std::size_t i = 0; i < turns; ++i) ex.history.push_back(utt());
  ex.response = utt();
  return ex;
}

// Central differences of f over every scalar parameter.
inline Parameters<double> finite_difference_gradient(Model<double> const &model,
                                                     std::function<double(Model<double> const &)> const &f,
                                                     double step)
{
  auto work = model;
  auto out = Parameters<double>::zeros(model.config);
  visit_tensors([&](std::string_view, auto &w, auto &g) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      double const keep = w.data()[i];
      w.data()[i] = keep + step;
      double const up = f(work);
      w.data()[i] = keep - step;
      double const down = f(work);
      w.data()[i] = keep;
      g.data()[i] = (up - down) / (2.0 * step);
    }
  }, work.params, out);
  return out;
}

// max |a - n| / max(max |a|, max |n|), per tensor
inline std::map<std::string, double> relative_errors(Parameters<double> const &a, Parameters<double> const &n)
{
  std::map<std::string, double> out;
  visit_tensors([&](std::string_view name, auto const &x, auto const &y) {
    double const scale = std::max({x.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff(), 1e-12});
    out[std::string(name)] = (x - y).cwiseAbs().maxCoeff() / scale;
  }, a, n);
  return out;
}

// Every output the decoder can produce: EOS-terminated sequences up to the
// length cap plus capped sequences without EOS, best first.
inline std::vector<Hypothesis> enumerate_sequences(Model<double> const &model, std::span<TokenId const> source)
{
  auto const V = static_cast<TokenId>(model.config.vocab_size);
  auto const L = model.config.max_decode_len;
  std::vector<Hypothesis> out;
  std::function<void(TokenSeq &)> grow = [&](TokenSeq &prefix) {
    if (prefix.size() == L) {
      out.push_back({prefix, decoder_log_prob(model, source, std::span<TokenId const>(prefix))});
      return;
    }
    for (TokenId t = 0; t < V; ++t) {
      prefix.push_back(t);
      if (t == kEos) {
        out.push_back({prefix, decoder_log_prob(model, source, std::span<TokenId const>(prefix))});
      } else {
        grow(prefix);
      }
      prefix.pop_back();
    }
  };
  TokenSeq prefix;
  grow(prefix);
  std::ranges::stable_sort(out, [](auto const &a, auto const &b) {
    return a.score != b.score ? a.score > b.score : a.tokens < b.tokens;
  });
  return out;
}

// Plain-loop forward pass; returns P(y_i | y_<i, x) for every target token.
inline std::vector<double> token_probabilities(Model<double> const &model, TokenSeq const &source, TokenSeq const &target)
{
  auto const &p = model.params;
  auto const  H = static_cast<int>(model.config.hidden_dim);
  auto const  E = static_cast<int>(model.config.embed_dim);
  auto const  V = static_cast<int>(model.config.vocab_size);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto cell = [&](GruWeights<double> const &w, TokenId x, std::vector<double> const &h) {
    std::vector<double> a(3 * H), u(3 * H, 0.0), z(H), r(H), out(H);
    for (int i = 0; i < 3 * H; ++i) {
      a[i] = w.bias(i);
      for (int k = 0; k < E; ++k) a[i] += w.input(i, k) * p.embedding(x, k);
    }
    for (int i = 0; i < 2 * H; ++i) {
      for (int k = 0; k < H; ++k) u[i] += w.hidden(i, k) * h[k];
    }
    for (int i = 0; i < H; ++i) {
      z[i] = sig(a[i] + u[i]);
      r[i] = sig(a[H + i] + u[H + i]);
    }
    for (int i = 0; i < H; ++i) {
      double c = a[2 * H + i];
      for (int k = 0; k < H; ++k) c += w.hidden(2 * H + i, k) * r[k] * h[k];
      out[i] = (1.0 - z[i]) * std::tanh(c) + z[i] * h[i];
    }
    return out;
  };
  std::vector<double> h(H, 0.0);
  if (model.config.role != ModelRole::ResponseLm) {
    for (auto x : source) h = cell(p.encoder, x, h);
  }
  std::vector<double> probs;
  TokenId             prev = kBos;
  for (auto y : target) {
    h = cell(p.decoder, prev, h);
    std::vector<double> e(V);
    double              total = 0.0;
    for (int v = 0; v < V; ++v) {
      double logit = p.output_bias(v);
      for (int k = 0; k < H; ++k) logit += p.output_weight(k, v) * h[k];
      e[v] = std::exp(logit);
      total += e[v];
    }
    probs.push_back(e[y] / total);
    prev = y;
  }
  return probs;
}

// (prod of all token probabilities)^(-1 / token count)
inline double perplexity_by_products(Model<double> const &model, std::vector<Example> const &examples)
{
  double      product = 1.0;
  std::size_t count = 0;
  for (auto const &ex : examples) {
    auto io = model_io(model.config.role, ex.history, ex.response);
    for (double q : token_probabilities(model, io.source, io.target)) {
      product *= q;
      ++count;
    }
  }
  return std::pow(product, -1.0 / static_cast<double>(count));
}

inline double distinct_n(std::vector<Utterance> const &responses, std::size_t n)
{
  std::unordered_set<std::string> grams;
  std::size_t                     tokens = 0;
  for (auto const &r : responses) {
    tokens += r.size();
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      std::string key;
      for (std::size_t j = i; j < i + n; ++j) key += std::to_string(r[j]) + ",";
      grams.insert(key);
    }
  }
  return tokens == 0 ? 0.0 : static_cast<double>(grams.size()) / static_cast<double>(tokens);
}

inline double overlap_pct(std::vector<Utterance> const &responses, std::vector<DialogueHistory> const &histories)
{
  double sum = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    std::unordered_set<TokenId> last(histories[i].back().begin(), histories[i].back().end());
    std::size_t                 hit = 0;
    for (auto t : responses[i]) hit += last.count(t);
    sum += responses[i].empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(responses[i].size());
  }
  return 100.0 * sum / static_cast<double>(responses.size());
}

inline double stopword_pct(std::vector<Utterance> const &responses, std::unordered_set<std::string> const &stop,
                           Vocabulary const &vocab)
{
  std::size_t hit = 0, total = 0;
  for (auto const &r : responses) {
    for (auto t : r) {
      hit += stop.count(vocab.surface(t));
      ++total;
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(total);
}

} // namespace oracle
