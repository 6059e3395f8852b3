#pragma once

#include "iat/corpus.hpp"
#include "iat/rng.hpp"
#include "iat/types.hpp"

#include <array>
#include <optional>
#include <span>
#include <string_view>

namespace iat {

enum class PerturbationKind : std::uint8_t
{
  Shuf,
  Rev,
  Drop,
  Truncate,
  Repl,
  WordShuffle,
  WordReverse,
  WordDrop,
  NounDrop,
  VerbDrop,
  WordRepl,
  Identity,
};

inline constexpr std::array<PerturbationKind, 11> kAllPerturbations = {
  PerturbationKind::Shuf,        PerturbationKind::Rev,         PerturbationKind::Drop,     PerturbationKind::Truncate,
  PerturbationKind::Repl,        PerturbationKind::WordShuffle, PerturbationKind::WordReverse,
  PerturbationKind::WordDrop,    PerturbationKind::NounDrop,    PerturbationKind::VerbDrop, PerturbationKind::WordRepl};

inline constexpr double kDropRate = 0.3;
inline constexpr double kReplRate = 0.3;
inline constexpr double kWordDropRate = 0.3;
inline constexpr double kWordReplRate = 0.3;

std::string_view                to_string(PerturbationKind kind);
std::optional<PerturbationKind> parse_perturbation(std::string_view name);
std::string                     perturbation_names(); // comma separated, for usage messages
bool                            is_utterance_level(PerturbationKind kind);

// Bernoulli draws made by the rate-based kinds, for measuring hit rates.
struct PerturbStats
{
  std::size_t events = 0;
  std::size_t hits = 0;
};

struct PerturbContext
{
  Rng                        &rng;
  std::span<Utterance const>  utterance_pool = {};
  PosLexicon const           *pos_lexicon = nullptr;
  std::size_t                 vocab_size = 0;
  PerturbStats               *stats = nullptr;
};

// Returns a corrupted copy of `history`; never empty, never an empty utterance.
DialogueHistory perturb_history(DialogueHistory const &history, PerturbationKind kind, PerturbContext &ctx);

PerturbationKind sample_kind(std::span<PerturbationKind const> enabled, Rng &rng);

} // namespace iat
