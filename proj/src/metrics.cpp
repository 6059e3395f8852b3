#include "iat/metrics.hpp"
#include "iat/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

namespace iat {

StopwordList::StopwordList(std::set<std::string> words)
  : words_(std::move(words))
{
  if (words_.empty()) {
    throw ConfigError("stop-word list is empty");
  }
}

StopwordList StopwordList::load(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open stop-word list " + path.string());
  }
  std::set<std::string> words;
  std::string           line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
      continue;
    }
    auto e = line.find_last_not_of(" \t\r");
    std::string w = line.substr(b, e - b + 1);
    std::ranges::transform(w, w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(w));
  }
  return StopwordList(std::move(words));
}

StopwordList StopwordList::load_default() { return load(IAT_DEFAULT_STOPWORDS); }

double distinct_n(std::span<Utterance const> responses, std::size_t n)
{
  if (responses.empty()) {
    throw PreconditionError("distinct-n needs at least one response");
  }
  if (n < 1) {
    throw PreconditionError("distinct-n needs n >= 1");
  }
  std::set<std::vector<TokenId>> unique;
  std::size_t                    tokens = 0;
  for (auto const &r : responses) {
    tokens += r.size();
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      unique.emplace(r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
  }
  if (unique.empty()) {
    return 0.0;
  }
  return static_cast<double>(unique.size()) / static_cast<double>(tokens);
}

double overlap_pct(std::span<Utterance const> responses, std::span<DialogueHistory const> histories)
{
  if (responses.size() != histories.size()) {
    throw PreconditionError("overlap needs one history per response");
  }
  if (responses.empty()) {
    throw PreconditionError("overlap needs at least one response");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    auto const &r = responses[i];
    if (r.empty() || histories[i].empty()) {
      continue;
    }
    auto const &last = histories[i].back();
    std::unordered_set<TokenId> seen(last.begin(), last.end());
    auto hits = std::ranges::count_if(r, [&](TokenId t) { return seen.contains(t); });
    total += static_cast<double>(hits) / static_cast<double>(r.size());
  }
  return 100.0 * total / static_cast<double>(responses.size());
}

double stopword_pct(std::span<Utterance const> responses, StopwordList const &stopwords, Vocabulary const &vocab)
{
  if (responses.empty()) {
    throw PreconditionError("stop-word rate needs at least one response");
  }
  std::size_t total = 0, hits = 0;
  for (auto const &r : responses) {
    for (auto t : r) {
      ++total;
      hits += stopwords.contains(vocab.surface(t)) ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace iat
