#include "dgslow/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgslow/errors.hpp"
#include "dgslow/objectives.hpp"

namespace dgslow {

std::string_view to_string(SearchStrategy s) noexcept {
  switch (s) {
    case SearchStrategy::kAdaptive: return "adaptive";
    case SearchStrategy::kGreedy: return "greedy";
    case SearchStrategy::kRandom: return "random";
  }
  return "?";
}

std::string_view to_string(SelectionMode m) noexcept { return m == SelectionMode::kGreedy ? "greedy" : "random"; }

SearchStrategy parse_search_strategy(std::string_view name) {
  if (name == "adaptive") return SearchStrategy::kAdaptive;
  if (name == "greedy") return SearchStrategy::kGreedy;
  if (name == "random") return SearchStrategy::kRandom;
  throw ConfigError("unknown search strategy '" + std::string(name) + "'");
}

void AttackConfig::check() const {
  if (!(eps >= -1.0 && eps <= 1.0)) throw ConfigError("eps must lie in [-1, 1]");
  if (!std::isfinite(tau)) throw ConfigError("tau must be finite");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(c1 >= 0.0 && c2 >= 0.0 && c1 + c2 <= 1.0)) throw ConfigError("c1, c2 must be >= 0 with c1 + c2 <= 1");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (k < 1) throw ConfigError("beam size k must be >= 1");
  if (T < 1) throw ConfigError("iteration count T must be >= 1");
  if (positions_per_candidate < 1) throw ConfigError("positions_per_candidate must be >= 1");
}

AttackConfig AttackConfig::for_strategy(std::string_view name) {
  AttackConfig cfg;
  if (name == "dgslow") return cfg;
  if (name == "gs" || name == "rs") {
    cfg.strategy = name == "gs" ? SearchStrategy::kGreedy : SearchStrategy::kRandom;
    cfg.use_mo = false;
    cfg.use_cf = false;
    return cfg;
  }
  if (name == "dgslow1" || name == "dgslow2" || name == "dgslow3") {
    cfg.use_mo = name == "dgslow3";
    cfg.use_cf = name == "dgslow2";
    return cfg;
  }
  throw ConfigError("unknown strategy '" + std::string(name) + "' (expected one of dgslow, gs, rs, dgslow1, "
                    "dgslow2, dgslow3)");
}

std::vector<std::string> AttackConfig::strategy_names() {
  return {"dgslow", "gs", "rs", "dgslow1", "dgslow2", "dgslow3"};
}

double fitness_ratio(std::size_t gl, double tc) noexcept {
  return static_cast<double>(gl) / std::max(tc, 1e-12);
}

double fitness_length_only(std::size_t gl) noexcept { return static_cast<double>(gl); }

void evaluate_fitness(const DialogueInstance& instance, AdversarialCandidate& candidate, VictimSession& session,
                      const TokenizedSentence& reference, bool use_cf) {
  GenerationResult gen = session.generate(instance, candidate.sentence);
  const ReferenceScore sc = session.score_reference(instance, candidate.sentence, reference);
  candidate.gl = gen.length();
  candidate.tc = compute_tc(sc);
  candidate.output = std::move(gen.tokens);
  candidate.fitness = use_cf ? fitness_ratio(candidate.gl, candidate.tc) : fitness_length_only(candidate.gl);
}

double quality(std::span<const AdversarialCandidate> valid_set) {
  if (valid_set.empty()) throw ContractError("quality of an empty candidate set");
  double sum = 0.0;
  for (const auto& c : valid_set) sum += c.cosine;
  return sum / static_cast<double>(valid_set.size());
}

double preference(std::size_t t, std::size_t T, double q) {
  if (T <= 1 || t <= 1) return 0.0;
  return static_cast<double>(t - 1) * std::exp(q - 1.0) / static_cast<double>(T - 1);
}

namespace {

bool ranks_before(const AdversarialCandidate& a, const AdversarialCandidate& b) {
  if (a.fitness != b.fitness) return a.fitness > b.fitness;
  if (a.cosine != b.cosine) return a.cosine > b.cosine;
  return a.id < b.id;
}

}  // namespace

std::vector<AdversarialCandidate> select(std::span<const AdversarialCandidate> valid_set, std::size_t k,
                                         SelectionMode mode, Rng& rng) {
  const std::size_t m = std::min(k, valid_set.size());
  std::vector<std::size_t> idx(valid_set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (mode == SelectionMode::kGreedy) {
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                      [&](std::size_t a, std::size_t b) { return ranks_before(valid_set[a], valid_set[b]); });
  } else {
    for (std::size_t i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  }
  std::vector<AdversarialCandidate> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(valid_set[idx[i]]);
  return out;
}

AttackOutcome attack(const DialogueInstance& instance, const VictimModel& victim, const AttackConfig& config,
                     const AttackResources& resources, Rng& rng) {
  config.check();
  if (!resources.generator || !resources.encoder || !resources.checker)
    throw ConfigError("attack needs a candidate generator, sentence encoder and grammar checker");
  validate_instance(instance);

  AttackOutcome out;
  out.original_input = tokenize(instance.utterance);
  out.adversarial_input = out.original_input;
  std::vector<Tokens> references;
  for (const auto& r : instance.references) references.push_back(tokenize(r).tokens);
  const TokenizedSentence first_ref = tokenize(instance.references.front());

  VictimSession session(victim, config.query_budget);
  const Validator validator(out.original_input, config.eps, *resources.encoder, *resources.checker);
  out.grammar_errors_before = out.grammar_errors_after = validator.original_errors();

  if (!session.can_afford(2)) {
    out.budget_exhausted = true;
    out.queries_used = session.queries();
    return out;
  }
  AdversarialCandidate root;
  root.sentence = out.original_input;
  root.grammar_errors = validator.original_errors();
  evaluate_fitness(instance, root, session, first_ref, config.use_cf);
  out.original_output = root.output;
  out.adversarial_output = root.output;
  out.gl_before = out.gl_after = root.gl;
  out.tc_before = out.tc_after = root.tc;

  std::size_t next_id = 1;
  std::set<std::vector<std::string>> seen{root.sentence.tokens};
  std::vector<AdversarialCandidate> beam{root};
  std::optional<AdversarialCandidate> best;
  const StopLossParams stop_params{config.beta, config.eps, 1.0};

  for (std::size_t t = 1; t <= config.T && !out.budget_exhausted; ++t) {
    std::vector<AdversarialCandidate> valid;
    for (const auto& member : beam) {
      if (member.perturbed_positions.size() >= member.sentence.size()) continue;
      if (!session.can_afford(1)) {
        out.budget_exhausted = true;
        break;
      }
      StopLossParams params = stop_params;
      params.rho = member.cosine;
      const GradientPair grads = session.gradients(instance, member.sentence, first_ref, params);
      const SaliencyRanking ranking =
          config.use_mo ? word_saliency(solve_pareto(grads.g_ll, grads.g_stop, config.c1, config.c2).combined_gradient,
                                        grads.utterance, member.perturbed_positions)
                        : word_saliency(grads.g_stop, grads.utterance, member.perturbed_positions);
      const std::size_t width = std::min(config.positions_per_candidate, ranking.order.size());
      for (std::size_t r = 0; r < width && !out.budget_exhausted; ++r) {
        const std::size_t pos = ranking.order[r];
        for (auto& word : generate_candidates(*resources.generator, member.sentence, pos, config.c)) {
          TokenizedSentence s = substitute(member.sentence, pos, std::move(word));
          if (!seen.insert(s.tokens).second) continue;
          const ValidationVerdict verdict = validator.check(s);
          if (!verdict.valid) continue;
          if (!session.can_afford(2)) {
            out.budget_exhausted = true;
            break;
          }
          AdversarialCandidate cand;
          cand.sentence = std::move(s);
          cand.perturbed_positions = member.perturbed_positions;
          cand.perturbed_positions.insert(pos);
          cand.cosine = verdict.cosine;
          cand.grammar_errors = verdict.grammar_errors;
          cand.id = next_id++;
          cand.parent = member.id;
          evaluate_fitness(instance, cand, session, first_ref, config.use_cf);
          valid.push_back(std::move(cand));
        }
      }
      if (out.budget_exhausted) break;
    }

    IterationTrace tr;
    tr.t = t;
    tr.valid = valid.size();
    if (valid.empty()) {
      tr.best_fitness = best ? best->fitness : 0.0;
      tr.queries = session.queries();
      out.trace.push_back(std::move(tr));
      out.iterations_run = t;
      break;
    }
    tr.q = quality(valid);
    tr.xi = preference(t, config.T, tr.q);
    switch (config.strategy) {
      case SearchStrategy::kAdaptive:
        tr.mode = tr.xi > config.delta ? SelectionMode::kRandom : SelectionMode::kGreedy;
        break;
      case SearchStrategy::kGreedy: tr.mode = SelectionMode::kGreedy; break;
      case SearchStrategy::kRandom: tr.mode = SelectionMode::kRandom; break;
    }
    for (const auto& c : valid)
      if (!best || ranks_before(c, *best)) best = c;
    beam = select(valid, config.k, tr.mode, rng);
    for (const auto& b : beam) {
      tr.beam.push_back(detokenize(b.sentence));
      tr.beam_fitness.push_back(b.fitness);
    }
    tr.best_fitness = best->fitness;
    tr.queries = session.queries();
    out.trace.push_back(std::move(tr));
    out.iterations_run = t;
  }

  if (best) {
    out.adversarial_input = best->sentence;
    out.adversarial_output = best->output;
    out.perturbed_positions = best->perturbed_positions;
    out.gl_after = best->gl;
    out.tc_after = best->tc;
    out.cosine = best->cosine;
    out.grammar_errors_after = best->grammar_errors;
  }
  out.original_scores = score(out.original_output, references);
  out.adversarial_scores = best ? score(out.adversarial_output, references) : out.original_scores;
  out.verdict = success(out.original_scores, out.adversarial_scores, out.cosine, config.eps, config.tau);
  out.queries_used = session.queries();
  return out;
}

InstanceRecord to_record(const AttackOutcome& o, std::size_t index) {
  InstanceRecord r;
  r.index = index;
  r.original_utterance = detokenize(o.original_input);
  r.adversarial_utterance = detokenize(o.adversarial_input);
  r.original_output = detokenize(o.original_output);
  r.adversarial_output = detokenize(o.adversarial_output);
  r.gl_before = o.gl_before;
  r.gl_after = o.gl_after;
  r.tc_before = o.tc_before;
  r.tc_after = o.tc_after;
  r.original_scores = o.original_scores;
  r.adversarial_scores = o.adversarial_scores;
  r.verdict = o.verdict;
  r.perturbed_words = o.perturbed_positions.size();
  r.grammar_errors_before = o.grammar_errors_before;
  r.grammar_errors_after = o.grammar_errors_after;
  r.queries = o.queries_used;
  r.iterations = o.iterations_run;
  return r;
}

}  // namespace dgslow
