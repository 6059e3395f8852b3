#pragma once

#include "iat/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iat {

using SurfaceUtterance = std::vector<std::string>;
using SurfaceDialogue = std::vector<SurfaceUtterance>;

// Lowercase, whitespace split, with . , ! ? ' split into their own tokens.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary
{
public:
  static constexpr std::string_view kReservedSurfaces[] = {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"};

  Vocabulary(); // reserved ids only

  // Reserved ids first, then descending frequency with lexicographic tie-break.
  static Vocabulary build(std::span<SurfaceDialogue const> dialogues, std::size_t max_size, std::size_t min_count);
  static Vocabulary load(std::filesystem::path const &path);
  void              save(std::filesystem::path const &path) const;

  std::size_t        size() const { return surfaces_.size(); }
  TokenId            id(std::string_view surface) const; // UNK when absent
  bool               contains(std::string_view surface) const;
  std::string const &surface(TokenId id) const; // RangeError when out of range

  Utterance                encode(std::span<std::string const> surfaces) const;
  std::vector<std::string> decode(std::span<TokenId const> ids) const;
  Dialogue                 encode(SurfaceDialogue const &dialogue) const;

  bool operator==(Vocabulary const &o) const { return surfaces_ == o.surfaces_; }

private:
  void add(std::string surface);

  std::unordered_map<std::string, TokenId> ids_;
  std::vector<std::string>                 surfaces_;
};

enum class PosTag : std::uint8_t
{
  Other,
  Noun,
  Verb,
};

std::string_view to_string(PosTag tag);
PosTag           parse_pos_tag(std::string_view s);

using SurfaceTags = std::map<std::string, PosTag>;

// Total map over vocabulary ids; reserved and unlisted surfaces are Other.
class PosLexicon
{
public:
  PosLexicon() = default;
  explicit PosLexicon(std::size_t vocab_size)
    : tags_(vocab_size, PosTag::Other)
  {
  }
  static PosLexicon from_surfaces(Vocabulary const &vocab, SurfaceTags const &tags);
  static SurfaceTags load_surfaces(std::filesystem::path const &path);
  static PosLexicon  load(std::filesystem::path const &path, Vocabulary const &vocab);
  static void        save(std::filesystem::path const &path, SurfaceTags const &tags);

  PosTag      tag(TokenId id) const;
  void        set(TokenId id, PosTag tag);
  std::size_t size() const { return tags_.size(); }

private:
  std::vector<PosTag> tags_;
};

struct LoadResult
{
  std::vector<SurfaceDialogue> dialogues;
  std::size_t                  dropped = 0;
};

// One JSON record {"dialogue": [string, ...]} per line. Records with fewer than
// two non-empty utterances are dropped and counted.
LoadResult load_dialogue_surfaces(std::filesystem::path const &path);
void       save_dialogue_surfaces(std::filesystem::path const &path, std::span<SurfaceDialogue const> dialogues);
std::vector<Dialogue> load_dialogues(std::filesystem::path const &path, Vocabulary const &vocab, std::size_t *dropped = nullptr);

std::string join_surfaces(SurfaceUtterance const &tokens);

inline constexpr std::size_t kDefaultHistoryWindow = 2;

// One example per turn t >= 1 with up to `history_window` preceding utterances.
std::vector<Example> make_examples(Dialogue const &dialogue, std::size_t history_window);
std::vector<Example> make_examples(std::span<Dialogue const> dialogues, std::size_t history_window);
// Drops examples whose response has fewer than `min_tokens` tokens (0 keeps all).
std::vector<Example> filter_short_responses(std::vector<Example> examples, std::size_t min_tokens);

// Every utterance of every dialogue, in order; the replacement pool for Repl.
std::vector<Utterance> utterance_pool(std::span<Dialogue const> dialogues);

struct SynthConfig
{
  std::size_t   num_dialogues = 2000;
  std::size_t   turns_per_dialogue = 6;
  std::size_t   entity_count = 40;
  double        generic_rate = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthCorpus
{
  std::vector<SurfaceDialogue> dialogues;
  SurfaceTags                  pos;
};

// Templated dialogues: an entity introduction, follow-up questions that may move
// to another entity, and answers that are either one of five fixed generic
// utterances (probability generic_rate) or mention the most recent entity.
// Turns 1, 3, 5, ... are answer turns.
SynthCorpus gen_synthetic(SynthConfig const &config);

std::span<SurfaceUtterance const> synthetic_generic_responses();
bool                              is_answer_turn(std::size_t turn);

} // namespace iat
