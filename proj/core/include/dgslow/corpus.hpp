#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgslow {

// A sentence split into word-level tokens. `raw` keeps the text it came from.
struct TokenizedSentence {
  std::vector<std::string> tokens;
  std::string raw;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens[i]; }

  // Sentences compare by tokens only; whitespace in `raw` is not significant.
  friend bool operator==(const TokenizedSentence& a, const TokenizedSentence& b) {
    return a.tokens == b.tokens;
  }
};

// Splitting rules:
//   1. whitespace separates chunks;
//   2. inside a chunk, runs of letters, digits and non-ASCII bytes form words;
//      a hyphen between two word characters stays inside the word;
//   3. an apostrophe followed by letters starts a clitic token ("'s", "'re");
//      "n't" is split off the preceding word ("don't" -> "do", "n't");
//   4. every other punctuation character is its own token.
// Case is preserved.
std::vector<std::string> split_words(std::string_view raw);

// Throws EmptyUtterance when no token survives.
TokenizedSentence tokenize(std::string_view raw);

// Joins tokens so that split_words(detokenize(t)) == t for any t produced by
// split_words.
std::string detokenize(std::span<const std::string> tokens);
inline std::string detokenize(const TokenizedSentence& s) { return detokenize(s.tokens); }

// True when the token contains a letter or digit.
bool is_word_token(std::string_view token) noexcept;

std::string to_lower(std::string_view s);

struct DialogueInstance {
  std::vector<std::string> persona;
  std::vector<std::string> history;
  std::string utterance;
  std::vector<std::string> references;

  friend bool operator==(const DialogueInstance&, const DialogueInstance&) = default;
};

// Throws EmptyUtterance / EmptyReference when the instance is not attackable.
void validate_instance(const DialogueInstance& instance);

struct LoadOptions {
  // Strict mode rethrows the first bad line; otherwise bad lines are skipped
  // and reported as warnings.
  bool strict = true;
};

struct LoadResult {
  std::vector<DialogueInstance> instances;
  std::vector<std::string> warnings;
};

LoadResult parse_jsonl(std::istream& in, const LoadOptions& options = {});
LoadResult load_jsonl(const std::filesystem::path& path, const LoadOptions& options = {});

// One object per line, keys in the order persona, history, utterance, references.
std::string to_jsonl_line(const DialogueInstance& instance);
void write_jsonl(std::ostream& out, std::span<const DialogueInstance> instances);
void write_jsonl(const std::filesystem::path& path, std::span<const DialogueInstance> instances);

struct CorpusSpec {
  std::uint64_t seed = 1;
  std::size_t num_dialogues = 100;
  std::size_t turns_per_dialogue = 4;
  std::string template_grammar = "persona_chat_v1";
};

std::vector<std::string> known_grammars();

// Deterministic template dialogues: one instance per turn, so the result holds
// num_dialogues * turns_per_dialogue instances. Throws ConfigError for an
// unknown grammar.
std::vector<DialogueInstance> generate_synthetic_corpus(const CorpusSpec& spec);

// Static word vectors and antonym lists covering a grammar's vocabulary.
// Words from the same semantic class share a centroid, so nearest neighbours
// are plausible substitutes.
struct SyntheticLexicon {
  std::vector<std::pair<std::string, std::vector<double>>> vectors;
  std::map<std::string, std::vector<std::string>> antonyms;
};

SyntheticLexicon synthetic_lexicon(const std::string& template_grammar, std::uint64_t seed,
                                   std::size_t dim = 32);

}  // namespace dgslow
