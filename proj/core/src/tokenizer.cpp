#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "dgslow/corpus.hpp"
#include "dgslow/errors.hpp"

namespace dgslow {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
bool is_alpha(unsigned char c) { return std::isalpha(c) != 0; }

bool is_plain_word(std::string_view tok) {
  return !tok.empty() && std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return is_word_char(c) || c == '-'; });
}

// "'s", "'re", "'t" ...
bool is_clitic(std::string_view tok) {
  return tok.size() >= 2 && tok[0] == '\'' &&
         std::all_of(tok.begin() + 1, tok.end(), [](unsigned char c) { return is_alpha(c); });
}

bool is_negation_clitic(std::string_view tok) {
  return tok.size() == 3 && (tok[0] == 'n' || tok[0] == 'N') && tok[1] == '\'' && (tok[2] == 't' || tok[2] == 'T');
}

bool is_closing_punct(std::string_view tok) {
  return tok.size() == 1 && std::string_view(".,!?;:%)]}").find(tok[0]) != std::string_view::npos;
}

bool is_opening_punct(std::string_view tok) {
  return tok.size() == 1 && std::string_view("([{$").find(tok[0]) != std::string_view::npos;
}

bool attaches_left(std::string_view tok, std::string_view prev) {
  if (is_opening_punct(prev)) return true;
  if (is_closing_punct(tok)) return true;
  if (is_negation_clitic(tok)) return is_plain_word(prev);
  if (is_clitic(tok)) {
    // "don" + "'t" would re-split as "do" + "n't".
    const bool t_clitic = tok.size() == 2 && (tok[1] == 't' || tok[1] == 'T');
    const bool ends_in_n = !prev.empty() && (prev.back() == 'n' || prev.back() == 'N');
    return is_plain_word(prev) && !(t_clitic && ends_in_n);
  }
  return false;
}

void split_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  std::size_t i = 0;
  const std::size_t n = chunk.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(chunk[i]);
    if (is_word_char(c)) {
      word.push_back(chunk[i]);
      ++i;
    } else if (c == '-' && !word.empty() && i + 1 < n && is_word_char(static_cast<unsigned char>(chunk[i + 1]))) {
      word.push_back('-');
      ++i;
    } else if (c == '\'' && i + 1 < n && is_alpha(static_cast<unsigned char>(chunk[i + 1]))) {
      std::size_t j = i + 1;
      while (j < n && is_alpha(static_cast<unsigned char>(chunk[j]))) ++j;
      const std::string_view suffix = chunk.substr(i + 1, j - i - 1);
      const bool negation = (suffix == "t" || suffix == "T") && !word.empty() &&
                            (word.back() == 'n' || word.back() == 'N');
      if (negation) {
        const char n_char = word.back();
        word.pop_back();
        flush();
        out.push_back(std::string{n_char} + "'" + std::string(suffix));
      } else {
        flush();
        out.push_back("'" + std::string(suffix));
      }
      i = j;
    } else {
      flush();
      out.emplace_back(1, chunk[i]);
      ++i;
    }
  }
  flush();
}

}  // namespace

std::vector<std::string> split_words(std::string_view raw) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && is_space(static_cast<unsigned char>(raw[i]))) ++i;
    std::size_t j = i;
    while (j < raw.size() && !is_space(static_cast<unsigned char>(raw[j]))) ++j;
    if (j > i) split_chunk(raw.substr(i, j - i), tokens);
    i = j;
  }
  return tokens;
}

TokenizedSentence tokenize(std::string_view raw) {
  TokenizedSentence s{split_words(raw), std::string(raw)};
  if (s.tokens.empty()) throw EmptyUtterance();
  return s;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !attaches_left(tokens[i], tokens[i - 1])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

bool is_word_token(std::string_view token) noexcept {
  return std::any_of(token.begin(), token.end(), [](unsigned char c) { return is_word_char(c); });
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace dgslow
