#include "iat/corpus.hpp"
#include "iat/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace iat {

namespace {

bool is_split_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?' || c == '\''; }

bool is_reserved_surface(std::string_view s)
{
  return std::ranges::find(Vocabulary::kReservedSurfaces, s) != std::end(Vocabulary::kReservedSurfaces);
}

std::ifstream open_input(std::filesystem::path const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  return in;
}

std::ofstream open_output(std::filesystem::path const &path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  return out;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text)
{
  std::vector<std::string> tokens;
  std::string              current;
  auto                     flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char raw : text) {
    auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (is_split_punct(raw)) {
      flush();
      tokens.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary()
{
  for (auto s : kReservedSurfaces) {
    add(std::string(s));
  }
}

void Vocabulary::add(std::string surface)
{
  ids_.emplace(surface, static_cast<TokenId>(surfaces_.size()));
  surfaces_.push_back(std::move(surface));
}

Vocabulary Vocabulary::build(std::span<SurfaceDialogue const> dialogues, std::size_t max_size, std::size_t min_count)
{
  if (max_size < kNumReserved + 1) {
    throw PreconditionError("vocabulary max_size must be at least 6");
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (auto const &d : dialogues) {
    for (auto const &u : d) {
      for (auto const &t : u) {
        if (!is_reserved_surface(t)) {
          ++counts[t];
        }
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::ranges::sort(ranked, [](auto const &a, auto const &b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary vocab;
  for (auto &[surface, count] : ranked) {
    if (vocab.size() >= max_size) {
      break;
    }
    if (count < std::max<std::size_t>(min_count, 1)) {
      continue;
    }
    vocab.add(surface);
  }
  return vocab;
}

Vocabulary Vocabulary::load(std::filesystem::path const &path)
{
  auto        in = open_input(path);
  Vocabulary  vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::istringstream ss(line);
    long long          id = -1;
    std::string        surface, extra;
    if (!(ss >> id >> surface) || (ss >> extra)) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": malformed vocabulary entry");
    }
    if (id < kNumReserved) {
      if (id < 0 || surface != kReservedSurfaces[id]) {
        throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": bad reserved entry");
      }
      continue;
    }
    if (id != static_cast<long long>(vocab.size()) || vocab.contains(surface)) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": ids must ascend without gaps");
    }
    vocab.add(surface);
  }
  return vocab;
}

void Vocabulary::save(std::filesystem::path const &path) const
{
  auto out = open_output(path);
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    out << i << ' ' << surfaces_[i] << '\n';
  }
}

TokenId Vocabulary::id(std::string_view surface) const
{
  auto it = ids_.find(std::string(surface));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view surface) const { return ids_.contains(std::string(surface)); }

std::string const &Vocabulary::surface(TokenId id) const
{
  if (id < 0 || static_cast<std::size_t>(id) >= surfaces_.size()) {
    throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return surfaces_[static_cast<std::size_t>(id)];
}

Utterance Vocabulary::encode(std::span<std::string const> surfaces) const
{
  Utterance u;
  u.reserve(surfaces.size());
  for (auto const &s : surfaces) {
    u.push_back(id(s));
  }
  return u;
}

std::vector<std::string> Vocabulary::decode(std::span<TokenId const> ids) const
{
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    out.push_back(surface(id));
  }
  return out;
}

Dialogue Vocabulary::encode(SurfaceDialogue const &dialogue) const
{
  Dialogue d;
  d.reserve(dialogue.size());
  for (auto const &u : dialogue) {
    d.push_back(encode(u));
  }
  return d;
}

std::string_view to_string(PosTag tag)
{
  switch (tag) {
  case PosTag::Noun: return "noun";
  case PosTag::Verb: return "verb";
  case PosTag::Other: break;
  }
  return "other";
}

PosTag parse_pos_tag(std::string_view s)
{
  if (s == "noun") return PosTag::Noun;
  if (s == "verb") return PosTag::Verb;
  if (s == "other") return PosTag::Other;
  throw ParseError("unknown POS tag '" + std::string(s) + "'");
}

PosLexicon PosLexicon::from_surfaces(Vocabulary const &vocab, SurfaceTags const &tags)
{
  PosLexicon lex(vocab.size());
  for (auto const &[surface, tag] : tags) {
    if (vocab.contains(surface) && !is_reserved_surface(surface)) {
      lex.set(vocab.id(surface), tag);
    }
  }
  return lex;
}

SurfaceTags PosLexicon::load_surfaces(std::filesystem::path const &path)
{
  auto        in = open_input(path);
  SurfaceTags tags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::istringstream ss(line);
    std::string        surface, tag, extra;
    if (!(ss >> surface >> tag) || (ss >> extra)) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": malformed lexicon entry");
    }
    tags[surface] = parse_pos_tag(tag);
  }
  return tags;
}

PosLexicon PosLexicon::load(std::filesystem::path const &path, Vocabulary const &vocab)
{
  return from_surfaces(vocab, load_surfaces(path));
}

void PosLexicon::save(std::filesystem::path const &path, SurfaceTags const &tags)
{
  auto out = open_output(path);
  for (auto const &[surface, tag] : tags) {
    out << surface << ' ' << to_string(tag) << '\n';
  }
}

PosTag PosLexicon::tag(TokenId id) const
{
  if (id < 0 || static_cast<std::size_t>(id) >= tags_.size()) {
    return PosTag::Other;
  }
  return tags_[static_cast<std::size_t>(id)];
}

void PosLexicon::set(TokenId id, PosTag tag)
{
  if (id < kNumReserved || static_cast<std::size_t>(id) >= tags_.size()) {
    throw RangeError("cannot tag token id " + std::to_string(id));
  }
  tags_[static_cast<std::size_t>(id)] = tag;
}

LoadResult load_dialogue_surfaces(std::filesystem::path const &path)
{
  auto        in = open_input(path);
  LoadResult  result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    auto malformed = [&] { return ParseError("line " + std::to_string(lineno) + ": malformed record"); };
    auto record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object() || !record.contains("dialogue") ||
        !record["dialogue"].is_array()) {
      throw malformed();
    }
    SurfaceDialogue dialogue;
    for (auto const &u : record["dialogue"]) {
      if (!u.is_string()) {
        throw malformed();
      }
      auto tokens = tokenize(u.get<std::string>());
      if (!tokens.empty()) {
        dialogue.push_back(std::move(tokens));
      }
    }
    if (dialogue.size() < 2) {
      ++result.dropped;
      continue;
    }
    result.dialogues.push_back(std::move(dialogue));
  }
  return result;
}

std::string join_surfaces(SurfaceUtterance const &tokens)
{
  std::string s;
  for (auto const &t : tokens) {
    if (!s.empty()) {
      s.push_back(' ');
    }
    s += t;
  }
  return s;
}

void save_dialogue_surfaces(std::filesystem::path const &path, std::span<SurfaceDialogue const> dialogues)
{
  auto out = open_output(path);
  for (auto const &d : dialogues) {
    nlohmann::json utterances = nlohmann::json::array();
    for (auto const &u : d) {
      utterances.push_back(join_surfaces(u));
    }
    out << nlohmann::json{{"dialogue", utterances}}.dump() << '\n';
  }
}

std::vector<Dialogue> load_dialogues(std::filesystem::path const &path, Vocabulary const &vocab, std::size_t *dropped)
{
  auto                  loaded = load_dialogue_surfaces(path);
  std::vector<Dialogue> out;
  out.reserve(loaded.dialogues.size());
  for (auto const &d : loaded.dialogues) {
    out.push_back(vocab.encode(d));
  }
  if (dropped) {
    *dropped = loaded.dropped;
  }
  return out;
}

std::vector<Example> make_examples(Dialogue const &dialogue, std::size_t history_window)
{
  if (history_window < 1) {
    throw PreconditionError("history window must be at least 1");
  }
  std::vector<Example> examples;
  for (std::size_t t = 1; t < dialogue.size(); ++t) {
    std::size_t first = t > history_window ? t - history_window : 0;
    Example     ex;
    ex.history.assign(dialogue.begin() + static_cast<std::ptrdiff_t>(first),
                      dialogue.begin() + static_cast<std::ptrdiff_t>(t));
    ex.response = dialogue[t];
    examples.push_back(std::move(ex));
  }
  return examples;
}

std::vector<Example> make_examples(std::span<Dialogue const> dialogues, std::size_t history_window)
{
  std::vector<Example> out;
  for (auto const &d : dialogues) {
    auto ex = make_examples(d, history_window);
    std::ranges::move(ex, std::back_inserter(out));
  }
  return out;
}

std::vector<Example> filter_short_responses(std::vector<Example> examples, std::size_t min_tokens)
{
  std::erase_if(examples, [&](Example const &e) { return e.response.size() < min_tokens; });
  return examples;
}

std::vector<Utterance> utterance_pool(std::span<Dialogue const> dialogues)
{
  std::vector<Utterance> pool;
  for (auto const &d : dialogues) {
    pool.insert(pool.end(), d.begin(), d.end());
  }
  return pool;
}

} // namespace iat
