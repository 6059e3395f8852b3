#pragma once

#include "iat/errors.hpp"
#include "iat/perturb.hpp"
#include "iat/seqmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace iat {

// Likelihood gap of one response under original and perturbed history.
struct RewardRecord
{
  double nll_orig = 0.0;
  double nll_adv = 0.0;
  double reward = 0.0;  // nll_adv - nll_orig
  double penalty = 0.0; // min(0, reward - margin)
  double margin = 0.0;

  bool operator==(RewardRecord const &) const = default;
};

// Penalty is zero exactly when the gap reaches the margin.
inline RewardRecord make_reward_record(double nll_orig, double nll_adv, double margin)
{
  if (!(margin >= 0.0)) {
    throw PreconditionError("margin must be non-negative");
  }
  RewardRecord r;
  r.nll_orig = nll_orig;
  r.nll_adv = nll_adv;
  r.margin = margin;
  r.reward = nll_adv - nll_orig;
  r.penalty = std::min(0.0, r.reward - margin);
  return r;
}

struct ObjectiveOptions
{
  double margin = 1.0;
  // Divide both NLLs by the target length before forming the reward.
  bool length_normalized = false;
};

// Negative log-likelihood of a decoder target (already EOS-terminated when
// the response ended).
template <typename Scalar>
double nll(Model<Scalar> const &model, std::span<TokenId const> source, std::span<TokenId const> target)
{
  return -decoder_log_prob(model, source, target);
}

template <typename Scalar>
double nll(Model<Scalar> const &model, DialogueHistory const &history, Utterance const &response)
{
  auto io = model_io(model.config.role, history, response);
  return nll(model, io.source, io.target);
}

template <typename Scalar>
RewardRecord reward(Model<Scalar> const     &model,
                    std::span<TokenId const> source,
                    std::span<TokenId const> perturbed_source,
                    std::span<TokenId const> target,
                    ObjectiveOptions const  &opts = {})
{
  double orig = nll(model, source, target);
  double adv = nll(model, perturbed_source, target);
  if (opts.length_normalized) {
    orig /= static_cast<double>(target.size());
    adv /= static_cast<double>(target.size());
  }
  return make_reward_record(orig, adv, opts.margin);
}

template <typename Scalar>
RewardRecord reward(Model<Scalar> const   &model,
                    DialogueHistory const &history,
                    DialogueHistory const &perturbed,
                    Utterance const       &response,
                    ObjectiveOptions const &opts = {})
{
  auto const target = with_eos(response);
  return reward(model, std::span<TokenId const>(flatten_history(history)),
                std::span<TokenId const>(flatten_history(perturbed)), std::span<TokenId const>(target), opts);
}

// Adds reward_weight * grad log P(target | source) + penalty_weight * grad log
// P(target | perturbed_source) into `grads`, the two scalars held constant.
template <typename Scalar>
void accumulate_iat_gradient(Model<Scalar> const     &model,
                             std::span<TokenId const> source,
                             std::span<TokenId const> perturbed_source,
                             std::span<TokenId const> target,
                             double                   reward_weight,
                             double                   penalty_weight,
                             Gradients<Scalar>       &grads)
{
  std::vector<Scalar> w(target.size(), static_cast<Scalar>(reward_weight));
  accumulate_gradient(model, source, target, std::span<Scalar const>(w), grads);
  std::ranges::fill(w, static_cast<Scalar>(penalty_weight));
  accumulate_gradient(model, perturbed_source, target, std::span<Scalar const>(w), grads);
}

template <typename Scalar>
Gradients<Scalar> iat_gradient(Model<Scalar> const     &model,
                               std::span<TokenId const> source,
                               std::span<TokenId const> perturbed_source,
                               std::span<TokenId const> target,
                               ObjectiveOptions const  &opts = {},
                               RewardRecord            *record = nullptr)
{
  auto const r = reward(model, source, perturbed_source, target, opts);
  auto       grads = Gradients<Scalar>::zeros(model.config);
  accumulate_iat_gradient(model, source, perturbed_source, target, r.reward, r.penalty, grads);
  require_finite(grads, "gradient");
  if (record) {
    *record = r;
  }
  return grads;
}

template <typename Scalar>
Gradients<Scalar> iat_gradient(Model<Scalar> const   &model,
                               DialogueHistory const &history,
                               DialogueHistory const &perturbed,
                               Utterance const       &response,
                               ObjectiveOptions const &opts = {},
                               RewardRecord          *record = nullptr)
{
  auto const src = flatten_history(history);
  auto const adv = flatten_history(perturbed);
  auto const target = with_eos(response);
  return iat_gradient(model, std::span<TokenId const>(src), std::span<TokenId const>(adv),
                      std::span<TokenId const>(target), opts, record);
}

// Per-batch summary of rewards and sampled perturbations.
struct IatBatchStats
{
  double                   mean_reward = 0.0;
  double                   mean_penalty = 0.0;
  double                   zero_penalty_fraction = 0.0;
  std::array<std::size_t, 12> kind_counts{};
  std::size_t              examples = 0;

  static IatBatchStats summarize(std::span<RewardRecord const> records, std::span<PerturbationKind const> kinds);
};

inline IatBatchStats IatBatchStats::summarize(std::span<RewardRecord const> records, std::span<PerturbationKind const> kinds)
{
  IatBatchStats s;
  s.examples = records.size();
  for (auto k : kinds) {
    ++s.kind_counts[static_cast<std::size_t>(k)];
  }
  if (records.empty()) {
    return s;
  }
  std::size_t zero = 0;
  for (auto const &r : records) {
    s.mean_reward += r.reward;
    s.mean_penalty += r.penalty;
    zero += r.penalty == 0.0 ? 1 : 0;
  }
  auto const n = static_cast<double>(records.size());
  s.mean_reward /= n;
  s.mean_penalty /= n;
  s.zero_penalty_fraction = static_cast<double>(zero) / n;
  return s;
}

// log p(T|S) - lambda * log p(T)
template <typename Scalar>
double mmi_anti_score(Model<Scalar> const     &forward_model,
                      Model<Scalar> const     &response_lm,
                      std::span<TokenId const> source,
                      std::span<TokenId const> target,
                      double                   lambda)
{
  if (!(lambda >= 0.0)) {
    throw PreconditionError("mmi lambda must be non-negative");
  }
  double const fwd = decoder_log_prob(forward_model, source, target);
  if (lambda == 0.0) {
    return fwd;
  }
  return fwd - lambda * decoder_log_prob(response_lm, {}, target);
}

template <typename Scalar>
double mmi_anti_score(Model<Scalar> const   &forward_model,
                      Model<Scalar> const   &response_lm,
                      DialogueHistory const &history,
                      Utterance const       &response,
                      double                 lambda)
{
  auto const src = flatten_history(history);
  auto const target = with_eos(response);
  return mmi_anti_score(forward_model, response_lm, std::span<TokenId const>(src), std::span<TokenId const>(target), lambda);
}

struct RankedHypothesis
{
  Hypothesis hypothesis;
  double     combined = 0.0;
};

// Stable descending sort on score + lambda * backward_log_prob.
inline std::vector<RankedHypothesis> rerank_with_backward(std::span<Hypothesis const> n_best,
                                                          std::span<double const>     backward_log_probs,
                                                          double                      lambda)
{
  if (n_best.empty()) {
    throw PreconditionError("cannot rerank an empty n-best list");
  }
  if (backward_log_probs.size() != n_best.size()) {
    throw PreconditionError("one backward score per hypothesis is required");
  }
  if (!(lambda >= 0.0)) {
    throw PreconditionError("mmi lambda must be non-negative");
  }
  std::vector<RankedHypothesis> out;
  out.reserve(n_best.size());
  for (std::size_t i = 0; i < n_best.size(); ++i) {
    out.push_back({n_best[i], n_best[i].score + lambda * backward_log_probs[i]});
  }
  std::ranges::stable_sort(out, [](auto const &a, auto const &b) { return a.combined > b.combined; });
  return out;
}

// Rescores with log p(S|T) from a backward model: the hypothesis (without
// EOS) is its input, the flattened history + EOS its target.
template <typename Scalar>
std::vector<RankedHypothesis> mmi_bidi_rerank(Model<Scalar> const         &backward_model,
                                              DialogueHistory const       &history,
                                              std::span<Hypothesis const>  n_best,
                                              double                       lambda)
{
  if (backward_model.config.role != ModelRole::Backward) {
    throw ConfigError("mmi-bidi reranking needs a backward-role model");
  }
  auto const          target = with_eos(flatten_history(history));
  std::vector<double> bwd;
  bwd.reserve(n_best.size());
  for (auto const &h : n_best) {
    if (lambda == 0.0) {
      bwd.push_back(0.0);
      continue;
    }
    auto const src = without_eos(h.tokens);
    bwd.push_back(decoder_log_prob(backward_model, std::span<TokenId const>(src), std::span<TokenId const>(target)));
  }
  return rerank_with_backward(n_best, bwd, lambda);
}

} // namespace iat
