#pragma once

#include "iat/corpus.hpp"
#include "iat/types.hpp"

#include <filesystem>
#include <set>
#include <span>
#include <string>

namespace iat {

// Stop words plus punctuation tokens, lowercase.
class StopwordList
{
public:
  explicit StopwordList(std::set<std::string> words);
  static StopwordList load(std::filesystem::path const &path);
  static StopwordList load_default();

  bool        contains(std::string const &surface) const { return words_.contains(surface); }
  std::size_t size() const { return words_.size(); }

private:
  std::set<std::string> words_;
};

// Unique n-grams across all responses divided by the total token count.
double distinct_n(std::span<Utterance const> responses, std::size_t n);

// Mean over examples of the fraction of response tokens found in the last
// history utterance, times 100.
double overlap_pct(std::span<Utterance const> responses, std::span<DialogueHistory const> histories);

// 100 * stop-word tokens / all tokens.
double stopword_pct(std::span<Utterance const> responses, StopwordList const &stopwords, Vocabulary const &vocab);

} // namespace iat
