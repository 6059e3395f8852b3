#include "iat/corpus.hpp"
#include "iat/errors.hpp"
#include "iat/rng.hpp"

#include <array>
#include <sstream>

namespace iat {

namespace {

constexpr std::array<std::string_view, 64> kEntityNames = {
  "cat",    "dog",     "car",     "house",  "movie",  "book",   "garden", "concert", "river",  "bridge", "horse",
  "piano",  "guitar",  "bike",    "train",  "museum", "park",   "beach",  "castle",  "robot",  "lamp",   "clock",
  "cake",   "pizza",   "coffee",  "tea",    "game",   "show",   "boat",   "plane",   "tree",   "flower", "shirt",
  "jacket", "phone",   "camera",  "laptop", "desk",   "chair",  "window", "door",    "kitchen","mountain","lake",
  "forest", "village", "market",  "bakery", "church", "school", "office", "hotel",   "island", "statue", "painting",
  "song",   "album",   "festival","parade", "circus", "zoo",    "tiger",  "lion",    "rabbit"};

constexpr std::array<std::string_view, 8> kAdjectives = {"great", "nice", "old", "big", "small", "red", "strange", "lovely"};

constexpr std::array<std::string_view, 9> kVerbs = {"saw", "bought", "loves", "did", "see", "was", "looked", "has", "is"};

// <e> is the entity slot, <a> an adjective slot.
constexpr std::array<std::string_view, 3> kIntroTemplates = {
  "i saw the <e> today .", "we bought a <e> yesterday .", "my sister loves the <e> ."};
constexpr std::array<std::string_view, 3> kQuestionTemplates = {
  "what about the <e> ?", "and the <e> ?", "did you see the <e> ?"};
// None of these start with "i", so the five generic answers share the most
// frequent first token.
constexpr std::array<std::string_view, 4> kAnswerTemplates = {
  "the <e> was <a> .", "that <e> looked <a> .", "my friend has a <a> <e> too .", "yes , the <e> is <a> ."};
constexpr std::array<std::string_view, 5> kGenericAnswers = {
  "i don t know .", "i am not sure .", "i have no idea .", "i don t care .", "i see ."};

constexpr double kEntitySwitchRate = 0.5;

std::vector<std::string> entity_names(std::size_t count)
{
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    if (i < kEntityNames.size()) {
      names.emplace_back(kEntityNames[i]);
    } else {
      names.push_back("thing" + std::to_string(i));
    }
  }
  return names;
}

SurfaceUtterance fill(std::string_view tmpl, std::string const &entity, std::string_view adjective)
{
  SurfaceUtterance   out;
  std::istringstream ss{std::string(tmpl)};
  std::string        word;
  while (ss >> word) {
    if (word == "<e>") {
      out.push_back(entity);
    } else if (word == "<a>") {
      out.emplace_back(adjective);
    } else {
      out.push_back(word);
    }
  }
  return out;
}

template <typename Array>
std::string_view pick(Rng &rng, Array const &items)
{
  return items[uniform_int<std::size_t>(rng, 0, items.size() - 1)];
}

std::vector<SurfaceUtterance> tokenized_generics()
{
  std::vector<SurfaceUtterance> out;
  for (auto g : kGenericAnswers) {
    out.push_back(fill(g, "", ""));
  }
  return out;
}

} // namespace

void SynthConfig::validate() const
{
  if (num_dialogues < 1 || turns_per_dialogue < 1 || entity_count < 1) {
    throw ConfigError("synthetic corpus counts must be at least 1");
  }
  if (!(generic_rate >= 0.0 && generic_rate <= 1.0)) {
    throw ConfigError("generic_rate must lie in [0, 1]");
  }
}

bool is_answer_turn(std::size_t turn) { return turn % 2 == 1; }

std::span<SurfaceUtterance const> synthetic_generic_responses()
{
  static auto const generics = tokenized_generics();
  return generics;
}

SynthCorpus gen_synthetic(SynthConfig const &config)
{
  config.validate();
  Rng         rng(config.seed);
  auto const  entities = entity_names(config.entity_count);
  auto const &generics = synthetic_generic_responses();

  SynthCorpus corpus;
  corpus.dialogues.reserve(config.num_dialogues);
  for (std::size_t d = 0; d < config.num_dialogues; ++d) {
    SurfaceDialogue dialogue;
    std::string     entity = entities[uniform_int<std::size_t>(rng, 0, entities.size() - 1)];
    dialogue.push_back(fill(pick(rng, kIntroTemplates), entity, ""));
    for (std::size_t t = 1; t < config.turns_per_dialogue; ++t) {
      if (is_answer_turn(t)) {
        if (bernoulli(rng, config.generic_rate)) {
          dialogue.push_back(generics[uniform_int<std::size_t>(rng, 0, generics.size() - 1)]);
        } else {
          dialogue.push_back(fill(pick(rng, kAnswerTemplates), entity, pick(rng, kAdjectives)));
        }
      } else {
        if (bernoulli(rng, kEntitySwitchRate)) {
          entity = entities[uniform_int<std::size_t>(rng, 0, entities.size() - 1)];
        }
        dialogue.push_back(fill(pick(rng, kQuestionTemplates), entity, ""));
      }
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }

  for (auto const &e : entities) {
    corpus.pos[e] = PosTag::Noun;
  }
  for (auto v : kVerbs) {
    corpus.pos[std::string(v)] = PosTag::Verb;
  }
  auto tag_other = [&](std::string_view tmpl) {
    for (auto const &w : fill(tmpl, "", "")) {
      if (!w.empty()) {
        corpus.pos.try_emplace(w, PosTag::Other);
      }
    }
  };
  for (auto t : kIntroTemplates) tag_other(t);
  for (auto t : kQuestionTemplates) tag_other(t);
  for (auto t : kAnswerTemplates) tag_other(t);
  for (auto t : kGenericAnswers) tag_other(t);
  for (auto a : kAdjectives) corpus.pos.try_emplace(std::string(a), PosTag::Other);
  corpus.pos.erase("<e>");
  corpus.pos.erase("<a>");
  return corpus;
}

} // namespace iat
