#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgslow/corpus.hpp"
#include "dgslow/metrics.hpp"
#include "dgslow/perturber.hpp"
#include "dgslow/rng.hpp"
#include "dgslow/victim.hpp"

namespace dgslow {

enum class SearchStrategy { kAdaptive, kGreedy, kRandom };
enum class SelectionMode { kGreedy, kRandom };

std::string_view to_string(SearchStrategy s) noexcept;
std::string_view to_string(SelectionMode m) noexcept;
SearchStrategy parse_search_strategy(std::string_view name);  // throws ConfigError

struct AttackConfig {
  double eps = 0.7;     // similarity threshold
  double tau = 0.0;     // metric-drop threshold
  double beta = 1.0;    // weight of the similarity hinge in the stop loss
  double c1 = 0.0;      // lower bound on the likelihood weight
  double c2 = 0.0;      // lower bound on the stop weight
  std::size_t c = 50;   // candidates per position
  double delta = 0.5;   // preference threshold
  std::size_t k = 2;    // beam size
  std::size_t T = 5;    // iterations
  std::size_t query_budget = 2000;
  std::size_t positions_per_candidate = 3;
  SearchStrategy strategy = SearchStrategy::kAdaptive;
  bool use_mo = true;   // Pareto-combined gradient instead of the stop gradient alone
  bool use_cf = true;   // fitness GL/TC instead of GL

  void check() const;  // throws ConfigError

  // Named variants: dgslow, gs, rs, dgslow1 (adaptive only), dgslow2 (+ GL/TC
  // fitness), dgslow3 (+ Pareto gradient). Throws ConfigError.
  static AttackConfig for_strategy(std::string_view name);
  static std::vector<std::string> strategy_names();
};

struct AdversarialCandidate {
  TokenizedSentence sentence;
  std::set<std::size_t> perturbed_positions;  // utterance-relative
  double fitness = 0.0;
  double cosine = 1.0;
  double tc = 0.0;
  std::size_t gl = 0;
  std::size_t grammar_errors = 0;
  std::vector<std::string> output;  // victim response to `sentence`
  std::size_t id = 0;               // creation order within one attack
  std::optional<std::size_t> parent;
};

// GL / max(TC, 1e-12).
double fitness_ratio(std::size_t gl, double tc) noexcept;
double fitness_length_only(std::size_t gl) noexcept;

// Generates and scores `sentence` against the first reference (2 queries) and
// fills gl, tc, output and fitness.
void evaluate_fitness(const DialogueInstance& instance, AdversarialCandidate& candidate, VictimSession& session,
                      const TokenizedSentence& reference, bool use_cf);

// Mean cosine of the valid set. Throws ContractError when empty.
double quality(std::span<const AdversarialCandidate> valid_set);

// ((t - 1) e^(q - 1)) / (T - 1); 0 when T == 1.
double preference(std::size_t t, std::size_t T, double q);

// Greedy: top k by fitness, then higher cosine, then earlier id.
// Random: min(k, |V|) distinct members drawn uniformly.
std::vector<AdversarialCandidate> select(std::span<const AdversarialCandidate> valid_set, std::size_t k,
                                         SelectionMode mode, Rng& rng);

struct IterationTrace {
  std::size_t t = 0;
  std::size_t valid = 0;  // |V_t|
  double q = 0.0;
  double xi = 0.0;
  SelectionMode mode = SelectionMode::kGreedy;
  std::vector<std::string> beam;  // detokenized beam after selection
  std::vector<double> beam_fitness;
  double best_fitness = 0.0;
  std::size_t queries = 0;  // cumulative after this iteration
};

struct AttackOutcome {
  TokenizedSentence original_input;
  std::vector<std::string> original_output;
  TokenizedSentence adversarial_input;
  std::vector<std::string> adversarial_output;
  std::set<std::size_t> perturbed_positions;
  double tc_before = 0.0, tc_after = 0.0;
  std::size_t gl_before = 0, gl_after = 0;
  double cosine = 1.0;
  std::size_t grammar_errors_before = 0, grammar_errors_after = 0;
  MetricScores original_scores, adversarial_scores;
  AttackSuccessRecord verdict;
  std::size_t queries_used = 0;
  std::size_t iterations_run = 0;
  bool budget_exhausted = false;
  std::vector<IterationTrace> trace;
};

// The pluggable pieces an attack runs with. All must outlive the call.
struct AttackResources {
  const CandidateGenerator* generator = nullptr;
  const SentenceEncoder* encoder = nullptr;
  const GrammarChecker* checker = nullptr;
};

AttackOutcome attack(const DialogueInstance& instance, const VictimModel& victim, const AttackConfig& config,
                     const AttackResources& resources, Rng& rng);

InstanceRecord to_record(const AttackOutcome& outcome, std::size_t index);

}  // namespace dgslow
