#include "dgslow/perturber.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "dgslow/errors.hpp"
#include "dgslow/rng.hpp"

namespace dgslow {

// ---------------------------------------------------------------------------
// EmbeddingTable

EmbeddingTable::EmbeddingTable(std::size_t dim, std::uint64_t fallback_seed)
    : dim_(dim), fallback_seed_(fallback_seed), matrix_(0, static_cast<Eigen::Index>(dim)) {
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
}

void EmbeddingTable::add(const std::string& word, std::span<const double> values) {
  if (values.size() != dim_)
    throw ConfigError("embedding for '" + word + "' has " + std::to_string(values.size()) + " dims, expected " +
                      std::to_string(dim_));
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ConfigError("embedding for '" + word + "' is zero or non-finite");
  v /= norm;
  const auto it = index_.find(word);
  if (it != index_.end()) {
    matrix_.row(static_cast<Eigen::Index>(it->second)) = v.transpose();
    return;
  }
  index_.emplace(word, words_.size());
  words_.push_back(word);
  matrix_.conservativeResize(matrix_.rows() + 1, Eigen::NoChange);
  matrix_.row(matrix_.rows() - 1) = v.transpose();
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, std::uint64_t fallback_seed) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open embedding table: " + path.string());
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> values;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad number '" + field + "' in embedding table");
      }
    }
    // word2vec-style "count dim" header.
    if (line_no == 1 && values.size() == 1 && std::all_of(word.begin(), word.end(), ::isdigit)) continue;
    if (dim == 0) dim = values.size();
    if (values.empty() || values.size() != dim)
      throw ParseError(line_no, "expected " + std::to_string(dim) + " values for '" + word + "'");
    rows.emplace_back(std::move(word), std::move(values));
  }
  if (rows.empty()) throw ConfigError("embedding table is empty: " + path.string());
  EmbeddingTable table(dim, fallback_seed);
  for (const auto& [w, v] : rows) table.add(w, v);
  return table;
}

EmbeddingTable EmbeddingTable::from_lexicon(const SyntheticLexicon& lexicon, std::uint64_t fallback_seed) {
  if (lexicon.vectors.empty()) throw ConfigError("lexicon has no vectors");
  EmbeddingTable table(lexicon.vectors.front().second.size(), fallback_seed);
  for (const auto& [w, v] : lexicon.vectors) table.add(w, v);
  return table;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write embedding table: " + path.string());
  out << std::setprecision(17);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i];
    for (Eigen::Index k = 0; k < matrix_.cols(); ++k) out << ' ' << matrix_(static_cast<Eigen::Index>(i), k);
    out << '\n';
  }
  if (!out) throw IOError("write failed: " + path.string());
}

bool EmbeddingTable::contains(std::string_view word) const { return index_.contains(std::string(word)); }

Eigen::VectorXd EmbeddingTable::vector(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) it = index_.find(to_lower(word));
  if (it != index_.end()) return matrix_.row(static_cast<Eigen::Index>(it->second)).transpose();
  Rng rng(derive_seed(fallback_seed_, stable_hash(to_lower(word))));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim_));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.normal();
  return v.normalized();
}

// ---------------------------------------------------------------------------
// AntonymLexicon

AntonymLexicon::AntonymLexicon(const std::map<std::string, std::vector<std::string>>& entries) {
  for (const auto& [w, list] : entries)
    for (const auto& a : list) add(w, a);
}

void AntonymLexicon::add(const std::string& word, const std::string& antonym) {
  auto& list = entries_[to_lower(word)];
  const std::string a = to_lower(antonym);
  if (std::find(list.begin(), list.end(), a) == list.end()) list.push_back(a);
}

bool AntonymLexicon::are_antonyms(std::string_view word, std::string_view other) const {
  const auto it = entries_.find(to_lower(word));
  if (it == entries_.end()) return false;
  const std::string o = to_lower(other);
  return std::find(it->second.begin(), it->second.end(), o) != it->second.end();
}

std::vector<std::string> AntonymLexicon::antonyms_of(std::string_view word) const {
  const auto it = entries_.find(to_lower(word));
  return it == entries_.end() ? std::vector<std::string>{} : it->second;
}

AntonymLexicon AntonymLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot open antonym file: " + path.string());
  AntonymLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto colon = t.find(':');
    if (colon == std::string::npos) throw ParseError(line_no, "expected 'word: a1,a2,...'");
    const std::string word = trim(t.substr(0, colon));
    if (word.empty()) throw ParseError(line_no, "missing word before ':'");
    std::stringstream rest(t.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      item = trim(item);
      if (!item.empty()) lex.add(word, item);
    }
  }
  return lex;
}

void AntonymLexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write antonym file: " + path.string());
  for (const auto& [w, list] : entries_) {
    out << w << ':';
    for (std::size_t i = 0; i < list.size(); ++i) out << (i ? "," : " ") << list[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Candidates

StaticEmbeddingGenerator::StaticEmbeddingGenerator(std::shared_ptr<const EmbeddingTable> table,
                                                   std::shared_ptr<const AntonymLexicon> antonyms)
    : table_(std::move(table)), antonyms_(std::move(antonyms)) {
  if (!table_) throw ConfigError("candidate generator needs an embedding table");
  if (!antonyms_) antonyms_ = std::make_shared<AntonymLexicon>();
  for (std::size_t i = 0; i < table_->size(); ++i) {
    const auto& w = table_->words()[i];
    if (!w.empty() && std::isalpha(static_cast<unsigned char>(w.front())) &&
        std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '\''; }))
      word_rows_.push_back(i);
  }
}

std::vector<std::string> StaticEmbeddingGenerator::candidates(const TokenizedSentence& sentence, std::size_t position,
                                                              std::size_t max_count) const {
  if (position >= sentence.size())
    throw IndexError("position " + std::to_string(position) + " outside a sentence of " +
                     std::to_string(sentence.size()) + " tokens");
  if (max_count == 0) return {};
  const std::string& original = sentence[position];
  const std::string original_lower = to_lower(original);
  const Eigen::VectorXd target = table_->vector(original);
  const Eigen::VectorXd sims = table_->matrix() * target;

  std::vector<std::size_t> rows;
  rows.reserve(word_rows_.size());
  for (std::size_t r : word_rows_) {
    const auto& w = table_->words()[r];
    if (to_lower(w) == original_lower) continue;
    if (antonyms_->are_antonyms(original, w)) continue;
    rows.push_back(r);
  }
  const std::size_t keep = std::min(max_count, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = sims[static_cast<Eigen::Index>(a)];
                      const double sb = sims[static_cast<Eigen::Index>(b)];
                      return sa != sb ? sa > sb : a < b;
                    });
  std::vector<std::string> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(table_->words()[rows[i]]);
  return out;
}

std::vector<std::string> generate_candidates(const CandidateGenerator& generator, const TokenizedSentence& sentence,
                                             std::size_t position, std::size_t max_count) {
  if (position >= sentence.size())
    throw IndexError("position " + std::to_string(position) + " outside a sentence of " +
                     std::to_string(sentence.size()) + " tokens");
  return generator.candidates(sentence, position, max_count);
}

// ---------------------------------------------------------------------------
// Sentence similarity

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double SentenceEncoder::similarity(std::span<const std::string> a, std::span<const std::string> b) const {
  return cosine(encode(a), encode(b));
}

Eigen::VectorXd MeanEmbeddingEncoder::encode(std::span<const std::string> tokens) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table_->dim()));
  for (const auto& t : tokens) sum += table_->vector(t);
  const double n = sum.norm();
  return n > 0.0 ? Eigen::VectorXd(sum / n) : sum;
}

// ---------------------------------------------------------------------------
// Grammar

namespace {

bool starts_with_letter(std::string_view t) {
  return !t.empty() && std::isalpha(static_cast<unsigned char>(t.front()));
}

bool is_clause_punct(std::string_view t) {
  return t.size() == 1 && std::string_view(".,;:!?").find(t[0]) != std::string_view::npos;
}

bool is_sentence_end(std::string_view t) {
  return t.size() == 1 && std::string_view(".!?").find(t[0]) != std::string_view::npos;
}

bool vowel_initial(std::string_view t) {
  return !t.empty() && std::string_view("aeiouAEIOU").find(t.front()) != std::string_view::npos;
}

}  // namespace

RuleGrammarChecker::Breakdown RuleGrammarChecker::breakdown(std::span<const std::string> tokens) const {
  Breakdown b;
  int parens = 0, brackets = 0, braces = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    const bool sentence_start = i == 0 || is_sentence_end(tokens[i - 1]);
    // A run of terminal marks ("!?") is one sentence boundary, not a new sentence.
    if (sentence_start && !(i > 0 && is_clause_punct(t)) && !starts_with_letter(t)) ++b.sentence;
    if (i > 0) {
      const std::string& prev = tokens[i - 1];
      if (is_word_token(t) && to_lower(t) == to_lower(prev)) ++b.repetition;
      if (is_clause_punct(t) && is_clause_punct(prev)) ++b.punctuation;
      if (starts_with_letter(t)) {
        const std::string p = to_lower(prev);
        if (p == "a" && vowel_initial(t)) ++b.article;
        if (p == "an" && !vowel_initial(t)) ++b.article;
      }
    }
    if (t == "(") ++parens;
    if (t == ")" && --parens < 0) { ++b.punctuation; parens = 0; }
    if (t == "[") ++brackets;
    if (t == "]" && --brackets < 0) { ++b.punctuation; brackets = 0; }
    if (t == "{") ++braces;
    if (t == "}" && --braces < 0) { ++b.punctuation; braces = 0; }
  }
  b.punctuation += static_cast<std::size_t>(parens + brackets + braces);
  return b;
}

// ---------------------------------------------------------------------------
// Substitution and validation

TokenizedSentence substitute(const TokenizedSentence& sentence, std::size_t position, std::string word) {
  if (position >= sentence.size())
    throw IndexError("position " + std::to_string(position) + " outside a sentence of " +
                     std::to_string(sentence.size()) + " tokens");
  TokenizedSentence out{sentence.tokens, {}};
  out.tokens[position] = std::move(word);
  out.raw = detokenize(out.tokens);
  return out;
}

Validator::Validator(const TokenizedSentence& original, double eps, const SentenceEncoder& encoder,
                     const GrammarChecker& checker)
    : eps_(eps),
      encoder_(&encoder),
      checker_(&checker),
      original_embedding_(encoder.encode(original.tokens)),
      original_errors_(checker.count_errors(original.tokens)) {}

ValidationVerdict Validator::check(const TokenizedSentence& candidate) const {
  ValidationVerdict v;
  v.cosine = cosine(original_embedding_, encoder_->encode(candidate.tokens));
  v.grammar_errors = checker_->count_errors(candidate.tokens);
  if (!(v.cosine > eps_)) v.reasons.emplace_back(kReasonSemantic);
  if (v.grammar_errors > original_errors_) v.reasons.emplace_back(kReasonGrammar);
  v.valid = v.reasons.empty();
  return v;
}

ValidationVerdict validate(const TokenizedSentence& original, const TokenizedSentence& candidate, double eps,
                           const SentenceEncoder& encoder, const GrammarChecker& checker) {
  return Validator(original, eps, encoder, checker).check(candidate);
}

}  // namespace dgslow
