#include "iat/perturb.hpp"
#include "iat/errors.hpp"

#include <algorithm>
#include <numeric>

namespace iat {

namespace {

struct KindName
{
  PerturbationKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 12> kNames = {{
  {PerturbationKind::Shuf, "shuf"},
  {PerturbationKind::Rev, "rev"},
  {PerturbationKind::Drop, "drop"},
  {PerturbationKind::Truncate, "truncate"},
  {PerturbationKind::Repl, "repl"},
  {PerturbationKind::WordShuffle, "word-shuffle"},
  {PerturbationKind::WordReverse, "word-reverse"},
  {PerturbationKind::WordDrop, "word-drop"},
  {PerturbationKind::NounDrop, "noun-drop"},
  {PerturbationKind::VerbDrop, "verb-drop"},
  {PerturbationKind::WordRepl, "word-repl"},
  {PerturbationKind::Identity, "identity"},
}};

bool draw(PerturbContext &ctx, double p)
{
  bool hit = bernoulli(ctx.rng, p);
  if (ctx.stats) {
    ++ctx.stats->events;
    ctx.stats->hits += hit ? 1 : 0;
  }
  return hit;
}

template <typename T>
void fisher_yates(std::vector<T> &items, Rng &rng)
{
  for (std::size_t i = items.size(); i > 1; --i) {
    auto j = uniform_int<std::size_t>(rng, 0, i - 1);
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng &rng)
{
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  fisher_yates(order, rng);
  if (n >= 2 && std::ranges::is_sorted(order)) {
    fisher_yates(order, rng);
  }
  return order;
}

// Keeps tokens where keep[i]; if none survive, keeps one uniformly chosen original token.
Utterance keep_or_single(Utterance const &u, std::vector<bool> const &keep, Rng &rng)
{
  Utterance out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (keep[i]) {
      out.push_back(u[i]);
    }
  }
  if (out.empty()) {
    out.push_back(u[uniform_int<std::size_t>(rng, 0, u.size() - 1)]);
  }
  return out;
}

template <typename Fn>
DialogueHistory per_utterance(DialogueHistory const &history, Fn &&fn)
{
  DialogueHistory out;
  out.reserve(history.size());
  for (auto const &u : history) {
    out.push_back(fn(u));
  }
  return out;
}

Utterance drop_tag(Utterance const &u, PosTag tag, PerturbContext &ctx)
{
  std::vector<bool> keep(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    keep[i] = ctx.pos_lexicon->tag(u[i]) != tag;
  }
  return keep_or_single(u, keep, ctx.rng);
}

} // namespace

std::string_view to_string(PerturbationKind kind)
{
  for (auto const &kn : kNames) {
    if (kn.kind == kind) {
      return kn.name;
    }
  }
  return "?";
}

std::optional<PerturbationKind> parse_perturbation(std::string_view name)
{
  for (auto const &kn : kNames) {
    if (kn.name == name) {
      return kn.kind;
    }
  }
  return std::nullopt;
}

std::string perturbation_names()
{
  std::string s;
  for (auto const &kn : kNames) {
    if (!s.empty()) {
      s += ", ";
    }
    s += kn.name;
  }
  return s;
}

bool is_utterance_level(PerturbationKind kind)
{
  switch (kind) {
  case PerturbationKind::Shuf:
  case PerturbationKind::Rev:
  case PerturbationKind::Drop:
  case PerturbationKind::Truncate:
  case PerturbationKind::Repl: return true;
  default: return false;
  }
}

DialogueHistory perturb_history(DialogueHistory const &history, PerturbationKind kind, PerturbContext &ctx)
{
  if (history.empty()) {
    throw PreconditionError("cannot perturb an empty dialogue history");
  }
  for (auto const &u : history) {
    if (u.empty()) {
      throw PreconditionError("dialogue history contains an empty utterance");
    }
  }
  auto const n = history.size();

  switch (kind) {
  case PerturbationKind::Identity: return history;

  case PerturbationKind::Shuf: {
    auto            order = shuffled_order(n, ctx.rng);
    DialogueHistory out;
    out.reserve(n);
    for (auto i : order) {
      out.push_back(history[i]);
    }
    return out;
  }

  case PerturbationKind::Rev: return DialogueHistory(history.rbegin(), history.rend());

  case PerturbationKind::Drop: {
    DialogueHistory out;
    for (auto const &u : history) {
      if (!draw(ctx, kDropRate)) {
        out.push_back(u);
      }
    }
    if (out.empty()) {
      out.push_back(history[uniform_int<std::size_t>(ctx.rng, 0, n - 1)]);
    }
    return out;
  }

  case PerturbationKind::Truncate: {
    if (n == 1) {
      return history;
    }
    auto k = uniform_int<std::size_t>(ctx.rng, 1, n - 1);
    return DialogueHistory(history.end() - static_cast<std::ptrdiff_t>(k), history.end());
  }

  case PerturbationKind::Repl: {
    if (ctx.utterance_pool.empty()) {
      throw ConfigError("repl perturbation needs a non-empty utterance pool");
    }
    return per_utterance(history, [&](Utterance const &u) {
      if (draw(ctx, kReplRate)) {
        return ctx.utterance_pool[uniform_int<std::size_t>(ctx.rng, 0, ctx.utterance_pool.size() - 1)];
      }
      return u;
    });
  }

  case PerturbationKind::WordShuffle:
    return per_utterance(history, [&](Utterance const &u) {
      Utterance out = u;
      fisher_yates(out, ctx.rng);
      return out;
    });

  case PerturbationKind::WordReverse:
    return per_utterance(history, [](Utterance const &u) { return Utterance(u.rbegin(), u.rend()); });

  case PerturbationKind::WordDrop:
    return per_utterance(history, [&](Utterance const &u) {
      std::vector<bool> keep(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        keep[i] = !draw(ctx, kWordDropRate);
      }
      return keep_or_single(u, keep, ctx.rng);
    });

  case PerturbationKind::NounDrop:
  case PerturbationKind::VerbDrop: {
    if (!ctx.pos_lexicon) {
      throw ConfigError(std::string(to_string(kind)) + " perturbation needs a POS lexicon");
    }
    auto tag = kind == PerturbationKind::NounDrop ? PosTag::Noun : PosTag::Verb;
    return per_utterance(history, [&](Utterance const &u) { return drop_tag(u, tag, ctx); });
  }

  case PerturbationKind::WordRepl: {
    if (ctx.vocab_size < static_cast<std::size_t>(kNumReserved) + 1) {
      throw ConfigError("word-repl perturbation needs a vocabulary of at least 6 ids");
    }
    auto const hi = static_cast<TokenId>(ctx.vocab_size - 1);
    return per_utterance(history, [&](Utterance const &u) {
      Utterance out = u;
      for (auto &t : out) {
        if (draw(ctx, kWordReplRate)) {
          t = uniform_int<TokenId>(ctx.rng, kNumReserved, hi);
        }
      }
      return out;
    });
  }
  }
  throw PreconditionError("unknown perturbation kind");
}

PerturbationKind sample_kind(std::span<PerturbationKind const> enabled, Rng &rng)
{
  if (enabled.empty()) {
    throw ConfigError("no perturbation kinds enabled");
  }
  return enabled[uniform_int<std::size_t>(rng, 0, enabled.size() - 1)];
}

} // namespace iat
