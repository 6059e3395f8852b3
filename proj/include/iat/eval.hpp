#pragma once

#include "iat/metrics.hpp"
#include "iat/objectives.hpp"
#include "iat/parallel.hpp"
#include "iat/perturb.hpp"
#include "iat/report.hpp"
#include "iat/seqmodel.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace iat {

// Read-only inputs the perturbation operators need.
struct PerturbResources
{
  std::span<Utterance const> utterance_pool = {};
  PosLexicon const          *pos_lexicon = nullptr;
  std::size_t                vocab_size = 0;
};

struct HistoryTransform
{
  PerturbationKind kind = PerturbationKind::Identity;
  std::uint64_t    seed = 0;
};

// Perturbs example i's history with its own generator derived from (seed, i).
inline DialogueHistory transformed_history(Example const &ex, std::size_t index, HistoryTransform const &tf, PerturbResources const &res)
{
  Rng            rng(derive_seed(tf.seed, {index}));
  PerturbContext ctx{rng, res.utterance_pool, res.pos_lexicon, res.vocab_size};
  return perturb_history(ex.history, tf.kind, ctx);
}

// exp(total NLL / total target tokens), EOS included.
template <typename Scalar>
double perplexity(Model<Scalar> const                   &model,
                  std::span<Example const>               examples,
                  std::optional<HistoryTransform> const &transform = std::nullopt,
                  PerturbResources const                &resources = {},
                  std::size_t                            threads = 1)
{
  if (examples.empty()) {
    throw PreconditionError("perplexity needs at least one example");
  }
  std::vector<double>      nlls(examples.size());
  std::vector<std::size_t> lengths(examples.size());
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    auto const &ex = examples[i];
    auto const  history = transform ? transformed_history(ex, i, *transform, resources) : ex.history;
    auto const  io = model_io(model.config.role, history, ex.response);
    nlls[i] = nll(model, std::span<TokenId const>(io.source), std::span<TokenId const>(io.target));
    lengths[i] = io.target.size();
  });
  double      total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < nlls.size(); ++i) {
    total += nlls[i];
    tokens += lengths[i];
  }
  return std::exp(total / static_cast<double>(tokens));
}

struct SensitivityResult
{
  double                                    perplexity_orig = 0.0;
  std::vector<std::pair<PerturbationKind, double>> delta_by_kind;  // mean over seeds
  std::vector<std::pair<PerturbationKind, double>> stddev_by_kind; // population stddev over seeds
  double                                    delta_macro = 0.0;      // Identity excluded
};

// Perplexity increase under each perturbation kind, averaged over seeds.
template <typename Scalar>
SensitivityResult perturbation_sensitivity(Model<Scalar> const              &model,
                                           std::span<Example const>          examples,
                                           std::span<PerturbationKind const> kinds,
                                           std::span<std::uint64_t const>    seeds,
                                           PerturbResources const           &resources,
                                           std::size_t                       threads = 1)
{
  if (kinds.empty() || seeds.empty()) {
    throw PreconditionError("perturbation sensitivity needs kinds and seeds");
  }
  SensitivityResult out;
  out.perplexity_orig = perplexity(model, examples, std::nullopt, resources, threads);
  double      macro = 0.0;
  std::size_t counted = 0;
  for (auto kind : kinds) {
    std::vector<double> deltas;
    for (auto seed : seeds) {
      if (kind == PerturbationKind::Identity) {
        deltas.push_back(0.0);
        continue;
      }
      deltas.push_back(perplexity(model, examples, HistoryTransform{kind, seed}, resources, threads) - out.perplexity_orig);
    }
    double mean = 0.0;
    for (auto d : deltas) mean += d;
    mean /= static_cast<double>(deltas.size());
    double var = 0.0;
    for (auto d : deltas) var += (d - mean) * (d - mean);
    var /= static_cast<double>(deltas.size());
    out.delta_by_kind.emplace_back(kind, mean);
    out.stddev_by_kind.emplace_back(kind, std::sqrt(var));
    if (kind != PerturbationKind::Identity) {
      macro += mean;
      ++counted;
    }
  }
  out.delta_macro = counted ? macro / static_cast<double>(counted) : 0.0;
  return out;
}

enum class DecodeMode : std::uint8_t
{
  Greedy,
  Beam,
  MmiAnti,
  MmiBidi,
};

std::string_view          to_string(DecodeMode mode);
std::optional<DecodeMode> parse_decode_mode(std::string_view s);

struct EvalConfig
{
  DecodeMode                    mode = DecodeMode::Greedy;
  std::size_t                   beam_width = 10;
  std::size_t                   n_best = 10;
  double                        mmi_lambda = 0.5;
  std::vector<std::uint64_t>    seeds = {1, 2, 3, 4, 5};
  std::vector<PerturbationKind> kinds = {kAllPerturbations.begin(), kAllPerturbations.end()};
  std::size_t                   threads = 1;
};

template <typename Scalar>
struct AuxModels
{
  Model<Scalar> const *response_lm = nullptr;
  Model<Scalar> const *backward = nullptr;
};

// One response per example under the chosen decoding rule (EOS stripped).
template <typename Scalar>
std::vector<Utterance> generate_responses(Model<Scalar> const     &model,
                                          std::span<Example const> examples,
                                          EvalConfig const        &config,
                                          AuxModels<Scalar> const &aux = {})
{
  if (config.mode == DecodeMode::MmiAnti && !aux.response_lm) {
    throw ConfigError("mmi-anti decoding needs a response language model");
  }
  if (config.mode == DecodeMode::MmiBidi && !aux.backward) {
    throw ConfigError("mmi-bidi decoding needs a backward model");
  }
  std::vector<Utterance> out(examples.size());
  parallel_for(examples.size(), config.threads, [&](std::size_t i) {
    auto const  src = decoder_source(model.config.role, examples[i].history);
    auto const  source = std::span<TokenId const>(src);
    Hypothesis  chosen;
    switch (config.mode) {
    case DecodeMode::Greedy: chosen = greedy_decode(model, source); break;
    case DecodeMode::Beam: chosen = beam_search(model, source, config.beam_width, 1).front(); break;
    case DecodeMode::MmiAnti: {
      auto   nbest = beam_search(model, source, config.beam_width, config.n_best);
      double best = -std::numeric_limits<double>::infinity();
      for (auto const &h : nbest) {
        double s = h.score;
        if (config.mmi_lambda != 0.0) {
          s -= config.mmi_lambda * decoder_log_prob(*aux.response_lm, {}, std::span<TokenId const>(h.tokens));
        }
        if (s > best) {
          best = s;
          chosen = h;
        }
      }
      break;
    }
    case DecodeMode::MmiBidi: {
      auto nbest = beam_search(model, source, config.beam_width, config.n_best);
      chosen = mmi_bidi_rerank(*aux.backward, examples[i].history, std::span<Hypothesis const>(nbest), config.mmi_lambda)
                 .front()
                 .hypothesis;
      break;
    }
    }
    out[i] = without_eos(chosen.tokens);
  });
  return out;
}

template <typename Scalar>
MetricsReport full_report(Model<Scalar> const     &model,
                          std::span<Example const> examples,
                          EvalConfig const        &config,
                          AuxModels<Scalar> const &aux,
                          PerturbResources const  &resources,
                          StopwordList const      &stopwords,
                          Vocabulary const        &vocab)
{
  if (examples.empty()) {
    throw PreconditionError("evaluation needs at least one example");
  }
  auto const responses = generate_responses(model, examples, config, aux);
  std::vector<DialogueHistory> histories;
  histories.reserve(examples.size());
  for (auto const &ex : examples) {
    histories.push_back(ex.history);
  }
  auto const sens = perturbation_sensitivity(model, examples, std::span<PerturbationKind const>(config.kinds),
                                             std::span<std::uint64_t const>(config.seeds), resources, config.threads);

  MetricsReport r;
  r.decode_mode = std::string(to_string(config.mode));
  r.perplexity_orig = sens.perplexity_orig;
  for (auto const &[k, v] : sens.delta_by_kind) {
    r.ppl_delta_by_kind[std::string(to_string(k))] = v;
  }
  for (auto const &[k, v] : sens.stddev_by_kind) {
    r.ppl_delta_std_by_kind[std::string(to_string(k))] = v;
  }
  r.ppl_delta_macro = sens.delta_macro;
  r.distinct_1 = distinct_n(responses, 1);
  r.distinct_2 = distinct_n(responses, 2);
  r.distinct_3 = distinct_n(responses, 3);
  r.overlap_pct = overlap_pct(responses, histories);
  r.stopword_pct = stopword_pct(responses, stopwords, vocab);
  r.num_examples = examples.size();
  r.seeds_used = config.seeds;
  return r;
}

inline std::string_view to_string(DecodeMode mode)
{
  switch (mode) {
  case DecodeMode::Greedy: return "greedy";
  case DecodeMode::Beam: return "beam";
  case DecodeMode::MmiAnti: return "mmi-anti";
  case DecodeMode::MmiBidi: return "mmi-bidi";
  }
  return "?";
}

inline std::optional<DecodeMode> parse_decode_mode(std::string_view s)
{
  if (s == "greedy") return DecodeMode::Greedy;
  if (s == "beam") return DecodeMode::Beam;
  if (s == "mmi-anti" || s == "mmi_anti") return DecodeMode::MmiAnti;
  if (s == "mmi-bidi" || s == "mmi_bidi") return DecodeMode::MmiBidi;
  return std::nullopt;
}

} // namespace iat
