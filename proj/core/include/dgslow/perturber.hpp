#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dgslow/corpus.hpp"

namespace dgslow {

// Static word vectors, stored unit-normalised. Words missing from the table
// get a deterministic pseudo-random unit vector derived from their spelling.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 32, std::uint64_t fallback_seed = 0);

  // Text format: one `word v1 v2 ... vd` per line.
  static EmbeddingTable load(const std::filesystem::path& path, std::uint64_t fallback_seed = 0);
  static EmbeddingTable from_lexicon(const SyntheticLexicon& lexicon, std::uint64_t fallback_seed = 0);
  void save(const std::filesystem::path& path) const;

  // Throws ConfigError on a dimension mismatch or a zero vector.
  void add(const std::string& word, std::span<const double> values);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  bool contains(std::string_view word) const;

  // Exact spelling first, then lower case, then the hashed fallback.
  Eigen::VectorXd vector(std::string_view word) const;
  // Rows are the unit vectors of words(), in order.
  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }

 private:
  std::size_t dim_;
  std::uint64_t fallback_seed_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  Eigen::MatrixXd matrix_;
};

// word -> antonyms. Text format: `word: a1,a2,...` per line.
class AntonymLexicon {
 public:
  AntonymLexicon() = default;
  explicit AntonymLexicon(const std::map<std::string, std::vector<std::string>>& entries);

  static AntonymLexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void add(const std::string& word, const std::string& antonym);
  // Case-insensitive.
  bool are_antonyms(std::string_view word, std::string_view other) const;
  std::vector<std::string> antonyms_of(std::string_view word) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// Proposes replacement words for one position of a sentence. Results never
// contain the original word or one of its antonyms and hold at most
// `max_count` entries, best first.
class CandidateGenerator {
 public:
  virtual ~CandidateGenerator() = default;
  virtual std::vector<std::string> candidates(const TokenizedSentence& sentence, std::size_t position,
                                              std::size_t max_count) const = 0;
};

// Ranks every word of an embedding table by cosine similarity to the word at
// the masked position. Only whole words are proposed.
class StaticEmbeddingGenerator final : public CandidateGenerator {
 public:
  StaticEmbeddingGenerator(std::shared_ptr<const EmbeddingTable> table, std::shared_ptr<const AntonymLexicon> antonyms);

  std::vector<std::string> candidates(const TokenizedSentence& sentence, std::size_t position,
                                      std::size_t max_count) const override;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  std::shared_ptr<const AntonymLexicon> antonyms_;
  std::vector<std::size_t> word_rows_;  // table rows that are whole words
};

// Throws IndexError when position is outside the sentence.
std::vector<std::string> generate_candidates(const CandidateGenerator& generator, const TokenizedSentence& sentence,
                                             std::size_t position, std::size_t max_count);

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  // Unit-norm embedding (zero vector only for an empty sentence).
  virtual Eigen::VectorXd encode(std::span<const std::string> tokens) const = 0;

  double similarity(std::span<const std::string> a, std::span<const std::string> b) const;
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Normalised mean of the unit word vectors.
class MeanEmbeddingEncoder final : public SentenceEncoder {
 public:
  explicit MeanEmbeddingEncoder(std::shared_ptr<const EmbeddingTable> table) : table_(std::move(table)) {}
  Eigen::VectorXd encode(std::span<const std::string> tokens) const override;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
};

class GrammarChecker {
 public:
  virtual ~GrammarChecker() = default;
  virtual std::size_t count_errors(std::span<const std::string> tokens) const = 0;
};

// Counts violations of four surface rules:
//   repetition   - a word immediately repeated ("the the");
//   sentence     - a sentence (start of text or after . ! ?) whose first
//                  token does not begin with a letter;
//   punctuation  - two adjacent clause punctuation marks (", .") and
//                  unmatched brackets;
//   article      - "a" before a vowel-initial word, "an" before a consonant.
class RuleGrammarChecker final : public GrammarChecker {
 public:
  struct Breakdown {
    std::size_t repetition = 0;
    std::size_t sentence = 0;
    std::size_t punctuation = 0;
    std::size_t article = 0;
    std::size_t total() const noexcept { return repetition + sentence + punctuation + article; }
  };

  Breakdown breakdown(std::span<const std::string> tokens) const;
  std::size_t count_errors(std::span<const std::string> tokens) const override { return breakdown(tokens).total(); }
};

// Copy of `sentence` with the token at `position` replaced by `word`.
TokenizedSentence substitute(const TokenizedSentence& sentence, std::size_t position, std::string word);

inline constexpr const char* kReasonSemantic = "semantic";
inline constexpr const char* kReasonGrammar = "grammar";

struct ValidationVerdict {
  bool valid = false;
  double cosine = 0.0;
  std::size_t grammar_errors = 0;
  std::vector<std::string> reasons;
};

// valid <=> cosine(original, candidate) > eps and
//           grammar_errors(candidate) <= grammar_errors(original).
ValidationVerdict validate(const TokenizedSentence& original, const TokenizedSentence& candidate, double eps,
                           const SentenceEncoder& encoder, const GrammarChecker& checker);

// Same contract with the original's embedding and error count computed once.
class Validator {
 public:
  Validator(const TokenizedSentence& original, double eps, const SentenceEncoder& encoder,
            const GrammarChecker& checker);

  ValidationVerdict check(const TokenizedSentence& candidate) const;
  std::size_t original_errors() const noexcept { return original_errors_; }
  double eps() const noexcept { return eps_; }

 private:
  double eps_;
  const SentenceEncoder* encoder_;
  const GrammarChecker* checker_;
  Eigen::VectorXd original_embedding_;
  std::size_t original_errors_;
};

}  // namespace dgslow
