#pragma once

#include "iat/eval.hpp"
#include "iat/objectives.hpp"
#include "iat/parallel.hpp"
#include "iat/perturb.hpp"
#include "iat/seqmodel.hpp"
#include "iat/train_config.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace iat {

template <typename Scalar>
struct OptimizerState
{
  Parameters<Scalar> first_moment;
  Parameters<Scalar> second_moment;
  std::uint64_t      step = 0;

  static OptimizerState zeros(ModelConfig const &config)
  {
    return {Parameters<Scalar>::zeros(config), Parameters<Scalar>::zeros(config), 0};
  }
};

// One Adam update that *ascends* along `ascent` (the caller passes +grad J).
// The gradient is clipped to global norm grad_clip first.
template <typename Scalar>
void adam_step(Parameters<Scalar> &params, Gradients<Scalar> ascent, OptimizerState<Scalar> &state, TrainConfig const &config)
{
  require_finite(ascent, "gradient");
  double const norm = std::sqrt(static_cast<double>(squared_norm(ascent)));
  if (norm > config.grad_clip) {
    ascent *= static_cast<Scalar>(config.grad_clip / norm);
  }
  ++state.step;
  auto const b1 = static_cast<Scalar>(config.adam_beta1);
  auto const b2 = static_cast<Scalar>(config.adam_beta2);
  auto const c1 = static_cast<Scalar>(1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step)));
  auto const c2 = static_cast<Scalar>(1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step)));
  auto const lr = static_cast<Scalar>(config.learning_rate);
  auto const eps = static_cast<Scalar>(config.adam_eps);
  visit_tensors([&](std::string_view, auto &theta, auto const &g, auto &m, auto &v) {
    // descent-form update on d = -g
    m = b1 * m - (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }, params, ascent, state.first_moment, state.second_moment);
}

struct EpochRecord
{
  std::size_t epoch = 0;
  double      train_loss = 0.0;
  double      valid_ppl = 0.0;
  double      mean_reward = 0.0;
  double      mean_penalty = 0.0;
  double      seconds = 0.0;
};

struct TrainLog
{
  std::vector<EpochRecord> epochs;

  void write_csv(std::filesystem::path const &path) const
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw Error("cannot write training log " + path.string());
    }
    out << "epoch,train_loss,valid_ppl,mean_reward,mean_penalty,seconds\n";
    out.precision(10);
    for (auto const &e : epochs) {
      out << e.epoch << ',' << e.train_loss << ',' << e.valid_ppl << ',' << e.mean_reward << ',' << e.mean_penalty
          << ',' << e.seconds << '\n';
    }
  }
};

// Stop once `patience` consecutive checks fail to improve on the best.
class EarlyStopping
{
public:
  explicit EarlyStopping(std::size_t patience)
    : patience_(patience)
  {
  }

  // Returns true when `value` is a new best.
  bool update(double value)
  {
    ++checks_;
    if (value < best_) {
      best_ = value;
      best_check_ = checks_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }
  bool        should_stop() const { return stale_ >= patience_; }
  double      best() const { return best_; }
  std::size_t best_check() const { return best_check_; } // 1-based

private:
  std::size_t patience_;
  std::size_t checks_ = 0;
  std::size_t best_check_ = 0;
  std::size_t stale_ = 0;
  double      best_ = std::numeric_limits<double>::infinity();
};

template <typename Scalar>
struct TrainResult
{
  Model<Scalar> model; // best-validation parameters
  TrainLog      log;
};

struct TrainHooks
{
  std::size_t                              threads = 1;
  std::function<void(EpochRecord const &)> on_epoch;
};

namespace detail {

inline std::vector<std::size_t> epoch_order(std::size_t n, std::size_t take, std::uint64_t seed, std::size_t epoch)
{
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x5eed0, epoch}));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[uniform_int<std::size_t>(rng, 0, i - 1)]);
  }
  if (take > 0 && take < n) {
    order.resize(take);
  }
  return order;
}

template <typename Scalar>
Gradients<Scalar> sum_in_order(ModelConfig const &config, std::vector<Gradients<Scalar>> const &parts, std::vector<bool> const &used)
{
  auto total = Gradients<Scalar>::zeros(config);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (used[i]) {
      total += parts[i];
    }
  }
  return total;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// Maximum-likelihood training on mean per-token NLL with early stopping on
// validation perplexity. The model's role decides what is source and target.
template <typename Scalar>
TrainResult<Scalar> pretrain_mle(Model<Scalar>            model,
                                 std::span<Example const> train,
                                 std::span<Example const> valid,
                                 TrainConfig const       &config,
                                 TrainHooks const        &hooks = {})
{
  config.validate();
  if (train.empty() || valid.empty()) {
    throw PreconditionError("training and validation splits must be non-empty");
  }
  auto           opt = OptimizerState<Scalar>::zeros(model.config);
  EarlyStopping  stopper(config.patience);
  Model<Scalar>  best = model;
  TrainLog       log;
  std::size_t    slots = std::min(config.batch_size, train.size());
  std::vector<Gradients<Scalar>> parts(slots, Gradients<Scalar>::zeros(model.config));

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto const t0 = std::chrono::steady_clock::now();
    auto const order = detail::epoch_order(train.size(), config.epoch_examples, config.seed, epoch);
    double     epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::size_t const   n = std::min(config.batch_size, order.size() - start);
      std::vector<ModelIo> ios(n);
      std::size_t          tokens = 0;
      for (std::size_t b = 0; b < n; ++b) {
        auto const &ex = train[order[start + b]];
        ios[b] = model_io(model.config.role, ex.history, ex.response);
        tokens += ios[b].target.size();
      }
      auto const           w = static_cast<Scalar>(1.0 / static_cast<double>(tokens));
      std::vector<double>  logp(n);
      parallel_for(n, hooks.threads, [&](std::size_t b) {
        parts[b].set_zero();
        std::vector<Scalar> weights(ios[b].target.size(), w);
        logp[b] = accumulate_gradient(model, std::span<TokenId const>(ios[b].source),
                                      std::span<TokenId const>(ios[b].target), std::span<Scalar const>(weights), parts[b]);
      });
      std::vector<bool> used(parts.size(), false);
      std::fill(used.begin(), used.begin() + static_cast<std::ptrdiff_t>(n), true);
      adam_step(model.params, detail::sum_in_order(model.config, parts, used), opt, config);
      for (auto v : logp) {
        epoch_nll -= v;
      }
      epoch_tokens += tokens;
    }
    if (!std::isfinite(epoch_nll)) {
      throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_nll / static_cast<double>(epoch_tokens);
    rec.valid_ppl = perplexity(model, valid, std::nullopt, {}, hooks.threads);
    rec.seconds = detail::seconds_since(t0);
    log.epochs.push_back(rec);
    if (hooks.on_epoch) {
      hooks.on_epoch(rec);
    }
    if (stopper.update(rec.valid_ppl)) {
      best = model;
    }
    if (stopper.should_stop()) {
      break;
    }
  }
  return {std::move(best), std::move(log)};
}

// MLE training of the MMI helper models: the backward model p(S|T) or the
// response language model p(T).
template <typename Scalar>
TrainResult<Scalar> train_auxiliary(Model<Scalar>            model,
                                    std::span<Example const> train,
                                    std::span<Example const> valid,
                                    TrainConfig const       &config,
                                    TrainHooks const        &hooks = {})
{
  if (model.config.role == ModelRole::Forward) {
    throw PreconditionError("auxiliary training needs a backward or response_lm model");
  }
  return pretrain_mle(std::move(model), train, valid, config, hooks);
}

inline bool is_supervised_iteration(ModeSchedule schedule, std::size_t iteration)
{
  switch (schedule) {
  case ModeSchedule::SupervisedOnly: return true;
  case ModeSchedule::SelfSupervisedOnly: return false;
  case ModeSchedule::Alternate: return iteration % 2 == 1; // 1-based
  }
  return true;
}

// One IAT example after perturbation and reference selection.
struct IatSample
{
  PerturbationKind kind = PerturbationKind::Identity;
  TokenSeq         source;
  TokenSeq         perturbed_source;
  TokenSeq         target;
  RewardRecord     record;
  bool             skipped = false;
};

// Builds X', picks Y (gold, or sampled from the model) and scores the pair.
template <typename Scalar>
IatSample prepare_iat_sample(Model<Scalar> const    &model,
                             Example const          &ex,
                             bool                    supervised,
                             TrainConfig const      &config,
                             PerturbResources const &resources,
                             Rng                    &rng)
{
  IatSample s;
  s.kind = sample_kind(std::span<PerturbationKind const>(config.enabled_perturbations), rng);
  PerturbContext ctx{rng, resources.utterance_pool, resources.pos_lexicon, resources.vocab_size};
  s.source = flatten_history(ex.history);
  s.perturbed_source = flatten_history(perturb_history(ex.history, s.kind, ctx));
  if (supervised) {
    s.target = with_eos(ex.response);
  } else {
    auto const src = std::span<TokenId const>(s.source);
    auto       hyp = sample_decode(model, src, config.sample_temperature, rng);
    if (without_eos(hyp.tokens).empty()) {
      hyp = sample_decode(model, src, config.sample_temperature, rng);
    }
    if (without_eos(hyp.tokens).empty()) {
      s.skipped = true;
      return s;
    }
    s.target = std::move(hyp.tokens);
  }
  ObjectiveOptions opts{config.iat_margin, config.length_normalized_reward};
  s.record = reward(model, std::span<TokenId const>(s.source), std::span<TokenId const>(s.perturbed_source),
                    std::span<TokenId const>(s.target), opts);
  return s;
}

struct IatIterationStats
{
  bool          supervised = true;
  IatBatchStats batch;
  double        mean_nll_orig = 0.0;
};

// One IAT update on `batch`: average over kept examples of
// R * grad log P(Y|X) + P * grad log P(Y|X'), then one ascent step.
template <typename Scalar>
IatIterationStats iat_iteration(Model<Scalar>                  &model,
                                std::span<Example const>         batch,
                                std::size_t                      iteration,
                                std::size_t                      epoch,
                                OptimizerState<Scalar>          &opt,
                                TrainConfig const               &config,
                                PerturbResources const          &resources,
                                std::vector<Gradients<Scalar>>  &parts,
                                std::size_t                      threads = 1)
{
  IatIterationStats stats;
  stats.supervised = is_supervised_iteration(config.mode_schedule, iteration);
  std::size_t const      n = batch.size();
  std::vector<IatSample> samples(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(derive_seed(config.seed, {epoch, iteration, i}));
    samples[i] = prepare_iat_sample(model, batch[i], stats.supervised, config, resources, rng);
  });

  std::vector<RewardRecord>     records;
  std::vector<PerturbationKind> kinds;
  for (auto const &s : samples) {
    if (!s.skipped) {
      records.push_back(s.record);
      kinds.push_back(s.kind);
    }
  }
  if (records.empty()) {
    throw Error("every example in IAT iteration " + std::to_string(iteration) + " was skipped");
  }
  stats.batch = IatBatchStats::summarize(records, kinds);
  for (auto const &r : records) {
    stats.mean_nll_orig += r.nll_orig / static_cast<double>(records.size());
  }

  double shift = 0.0, scale = 1.0;
  if (config.standardize_rewards && records.size() > 1) {
    double var = 0.0;
    for (auto const &r : records) var += (r.reward - stats.batch.mean_reward) * (r.reward - stats.batch.mean_reward);
    var /= static_cast<double>(records.size());
    shift = stats.batch.mean_reward;
    scale = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }

  if (parts.size() < n) {
    parts.resize(n, Gradients<Scalar>::zeros(model.config));
  }
  std::vector<bool> used(parts.size(), false);
  parallel_for(n, threads, [&](std::size_t i) {
    auto const &s = samples[i];
    if (s.skipped) {
      return;
    }
    parts[i].set_zero();
    accumulate_iat_gradient(model, std::span<TokenId const>(s.source), std::span<TokenId const>(s.perturbed_source),
                            std::span<TokenId const>(s.target), (s.record.reward - shift) * scale, s.record.penalty,
                            parts[i]);
  });
  for (std::size_t i = 0; i < n; ++i) {
    used[i] = !samples[i].skipped;
  }
  auto grads = detail::sum_in_order(model.config, parts, used);
  grads *= static_cast<Scalar>(1.0 / static_cast<double>(records.size()));
  adam_step(model.params, std::move(grads), opt, config);
  return stats;
}

// IAT fine-tuning of a pretrained forward model. Returns the parameters of the
// best IAT epoch by validation perplexity of gold responses under the
// original histories.
template <typename Scalar>
TrainResult<Scalar> train_iat(Model<Scalar>              model,
                              std::span<Example const>   train,
                              std::span<Example const>   valid,
                              std::span<Utterance const> utterance_pool,
                              PosLexicon const          &pos_lexicon,
                              TrainConfig const         &config,
                              TrainHooks const          &hooks = {})
{
  config.validate();
  if (model.config.role != ModelRole::Forward) {
    throw PreconditionError("IAT trains a forward-role model");
  }
  if (train.empty() || valid.empty()) {
    throw PreconditionError("training and validation splits must be non-empty");
  }
  PerturbResources const resources{utterance_pool, &pos_lexicon, model.config.vocab_size};
  auto                   opt = OptimizerState<Scalar>::zeros(model.config);
  EarlyStopping          stopper(config.patience);
  std::optional<Model<Scalar>>   best;
  TrainLog                       log;
  std::vector<Gradients<Scalar>> parts;
  std::size_t                    iteration = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto const  t0 = std::chrono::steady_clock::now();
    auto const  order = detail::epoch_order(train.size(), config.epoch_examples, config.seed, epoch);
    double      reward_sum = 0.0, penalty_sum = 0.0, nll_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::size_t const    n = std::min(config.batch_size, order.size() - start);
      std::vector<Example> batch;
      batch.reserve(n);
      for (std::size_t b = 0; b < n; ++b) {
        batch.push_back(train[order[start + b]]);
      }
      ++iteration;
      auto const st = iat_iteration(model, std::span<Example const>(batch), iteration, epoch, opt, config, resources,
                                    parts, hooks.threads);
      auto const k = static_cast<double>(st.batch.examples);
      reward_sum += st.batch.mean_reward * k;
      penalty_sum += st.batch.mean_penalty * k;
      nll_sum += st.mean_nll_orig * k;
      counted += st.batch.examples;
    }
    if (!std::isfinite(reward_sum) || !std::isfinite(nll_sum)) {
      throw NumericError("IAT reward became non-finite at epoch " + std::to_string(epoch));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = nll_sum / static_cast<double>(counted);
    rec.mean_reward = reward_sum / static_cast<double>(counted);
    rec.mean_penalty = penalty_sum / static_cast<double>(counted);
    rec.valid_ppl = perplexity(model, valid, std::nullopt, {}, hooks.threads);
    rec.seconds = detail::seconds_since(t0);
    log.epochs.push_back(rec);
    if (hooks.on_epoch) {
      hooks.on_epoch(rec);
    }
    if (stopper.update(rec.valid_ppl)) {
      best = model;
    }
    if (stopper.should_stop()) {
      break;
    }
  }
  return {best ? std::move(*best) : std::move(model), std::move(log)};
}

} // namespace iat
