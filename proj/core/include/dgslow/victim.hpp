#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dgslow/corpus.hpp"
#include "dgslow/errors.hpp"

namespace dgslow {

inline constexpr std::string_view kPersonaToken = "[PS]";
inline constexpr std::string_view kSeparatorToken = "[SEP]";

enum class Segment : std::uint8_t { kPersona = 0, kHistory = 1, kUtterance = 2 };

// Half-open row range [begin, end) of the serialized input.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct SerializedInput {
  std::vector<std::string> tokens;
  std::vector<Segment> segments;
  Span utterance;
};

// [PS] p1 [PS] p2 [SEP] h1 [SEP] h2 [SEP] u. Empty persona drops the [PS]
// block; empty history drops the history block. `utterance` replaces the
// instance's own current utterance; persona and history are never altered.
SerializedInput serialize_input(const DialogueInstance& instance, const TokenizedSentence& utterance);

// The two numbers per decoding step that the end-of-sequence loss needs:
// the EOS logit and the probability-weighted mean logit.
struct StepStatistics {
  double eos_logit = 0.0;
  double expected_logit = 0.0;
};

struct GenerationResult {
  std::vector<std::string> tokens;  // EOS excluded
  Eigen::MatrixXd step_logits;      // one row per decoding step; may be empty for remote victims
  std::vector<StepStatistics> step_stats;
  bool ended_by_eos = false;
  int query_cost = 1;

  std::size_t length() const noexcept { return tokens.size(); }
};

struct ReferenceScore {
  std::vector<double> token_probs;    // teacher-forced p(ref_t | input, ref_<t)
  Eigen::MatrixXd logit_rows;         // one row per reference position; may be empty
  std::vector<std::size_t> token_ids; // column of each reference token in logit_rows
  int query_cost = 1;
};

struct GradientPair {
  Eigen::MatrixXd g_ll;    // d L_ll / d input embeddings, one row per serialized token
  Eigen::MatrixXd g_stop;  // d L_eos / d input embeddings
  Span utterance;          // rows of the current utterance
  double l_ll = 0.0;
  double l_eos = 0.0;
  int query_cost = 1;
};

struct StopLossParams {
  double beta = 1.0;
  double eps = 0.7;
  double rho = 1.0;
};

struct ModelInfo {
  std::string name;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
};

// Everything the attack needs from a dialogue model. Implementations are
// deterministic: identical arguments give identical results.
class VictimModel {
 public:
  virtual ~VictimModel() = default;

  virtual ModelInfo info() const = 0;

  // Greedy decoding until EOS or the model's length cap.
  virtual GenerationResult generate(const DialogueInstance& instance, const TokenizedSentence& utterance) const = 0;

  // Throws EmptyReference for an empty reference.
  virtual ReferenceScore score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                         const TokenizedSentence& reference) const = 0;

  // g_stop is the gradient of the end-of-sequence loss only; the similarity
  // hinge comes from an external encoder and has no gradient here.
  virtual GradientPair gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                 const TokenizedSentence& reference, const StopLossParams& params) const = 0;
};

class BudgetExhausted : public Error {
 public:
  BudgetExhausted() : Error("query budget exhausted") {}
};

// Per-attack view of a victim that counts queries. Each generate, score or
// gradients call costs exactly one query; a call that would overrun the
// budget throws BudgetExhausted without reaching the model.
class VictimSession {
 public:
  explicit VictimSession(const VictimModel& model,
                         std::size_t budget = std::numeric_limits<std::size_t>::max())
      : model_(&model), budget_(budget) {}

  GenerationResult generate(const DialogueInstance& instance, const TokenizedSentence& utterance);
  ReferenceScore score_reference(const DialogueInstance& instance, const TokenizedSentence& utterance,
                                 const TokenizedSentence& reference);
  GradientPair gradients(const DialogueInstance& instance, const TokenizedSentence& utterance,
                         const TokenizedSentence& reference, const StopLossParams& params);

  std::size_t queries() const noexcept { return queries_; }
  std::size_t budget() const noexcept { return budget_; }
  std::size_t remaining() const noexcept { return budget_ - queries_; }
  bool can_afford(std::size_t n) const noexcept { return remaining() >= n; }
  const VictimModel& model() const noexcept { return *model_; }

 private:
  void charge();

  const VictimModel* model_;
  std::size_t budget_;
  std::size_t queries_ = 0;
};

}  // namespace dgslow
