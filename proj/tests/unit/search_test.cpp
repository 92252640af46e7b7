#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "../common/test_support.hpp"
#include "dgslow/errors.hpp"
#include "dgslow/search.hpp"

namespace dgslow {
namespace {

using testing::attack_kit;
using testing::small_corpus;
using testing::trained_victim;

AdversarialCandidate cand(double fitness, double cosine, std::size_t id) {
  AdversarialCandidate c;
  c.fitness = fitness;
  c.cosine = cosine;
  c.id = id;
  return c;
}

std::vector<std::size_t> ids(const std::vector<AdversarialCandidate>& v) {
  std::vector<std::size_t> out;
  for (const auto& c : v) out.push_back(c.id);
  return out;
}

TEST(Fitness, RatioAndLengthOnly) {
  EXPECT_DOUBLE_EQ(fitness_ratio(20, 0.5), 40.0);
  EXPECT_EQ(fitness_ratio(0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(fitness_ratio(3, 0.0), 3e12);
  EXPECT_EQ(fitness_length_only(20), 20.0);
  EXPECT_GT(fitness_length_only(9), fitness_length_only(5));
}

TEST(Fitness, EvaluationMatchesTheVictimAndCostsTwoQueries) {
  const auto& v = trained_victim();
  const auto& inst = small_corpus()[5];
  const auto ref = tokenize(inst.references.front());
  for (bool cf : {true, false}) {
    VictimSession session(v);
    AdversarialCandidate c;
    c.sentence = tokenize(inst.utterance);
    evaluate_fitness(inst, c, session, ref, cf);
    EXPECT_EQ(session.queries(), 2u);
    const auto gen = v.generate(inst, c.sentence);
    double tc = 0.0;
    for (double p : v.score_reference(inst, c.sentence, ref).token_probs) tc += p;
    EXPECT_EQ(c.gl, gen.tokens.size());
    EXPECT_EQ(c.output, gen.tokens);
    EXPECT_NEAR(c.tc, tc, 1e-12);
    EXPECT_NEAR(c.fitness, cf ? gen.tokens.size() / tc : static_cast<double>(gen.tokens.size()), 1e-9);
  }
}

TEST(Quality, MeanCosine) {
  const std::vector<AdversarialCandidate> two{cand(0, 0.8, 1), cand(0, 0.9, 2)};
  EXPECT_NEAR(quality(two), 0.85, 1e-12);
  EXPECT_EQ(quality(std::vector<AdversarialCandidate>{cand(0, 0.75, 1)}), 0.75);
  EXPECT_EQ(quality(std::vector<AdversarialCandidate>{cand(0, 1.0, 1), cand(0, 1.0, 2)}), 1.0);
  EXPECT_THROW(quality(std::vector<AdversarialCandidate>{}), ContractError);
}

TEST(Preference, Examples) {
  EXPECT_EQ(preference(1, 5, 0.3), 0.0);
  EXPECT_EQ(preference(5, 5, 1.0), 1.0);
  EXPECT_NEAR(preference(3, 5, 0.8), 0.40937, 1e-5);
  EXPECT_NEAR(preference(3, 5, 0.8), 0.5 * std::exp(-0.2), 1e-15);
  EXPECT_EQ(preference(1, 1, 1.0), 0.0);
}

TEST(Preference, BoundedOnAGrid) {
  for (std::size_t T = 1; T <= 10; ++T)
    for (std::size_t t = 1; t <= T; ++t)
      for (int i = 0; i <= 100; ++i) {
        const double xi = preference(t, T, i / 100.0);
        EXPECT_GE(xi, 0.0);
        EXPECT_LE(xi, 1.0);
        if (t > 1) EXPECT_LE(preference(t - 1, T, i / 100.0), xi);
      }
}

TEST(Select, GreedyTopK) {
  Rng rng(1);
  const std::vector<AdversarialCandidate> v{cand(3, 0.8, 1), cand(1, 0.8, 2), cand(2, 0.8, 3)};
  EXPECT_EQ(ids(select(v, 2, SelectionMode::kGreedy, rng)), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(ids(select(std::span(v).first(1), 2, SelectionMode::kGreedy, rng)), (std::vector<std::size_t>{1}));
}

TEST(Select, GreedyTieBreaks) {
  Rng rng(1);
  const std::vector<AdversarialCandidate> v{cand(2, 0.8, 4), cand(2, 0.9, 7), cand(2, 0.8, 2)};
  EXPECT_EQ(ids(select(v, 3, SelectionMode::kGreedy, rng)), (std::vector<std::size_t>{7, 2, 4}));
}

TEST(Select, RandomIsSeededAndWithoutReplacement) {
  std::vector<AdversarialCandidate> v;
  for (std::size_t i = 0; i < 10; ++i) v.push_back(cand(static_cast<double>(i), 0.8, i));
  Rng a(99), b(99);
  const auto sa = ids(select(v, 4, SelectionMode::kRandom, a));
  EXPECT_EQ(sa, ids(select(v, 4, SelectionMode::kRandom, b)));
  EXPECT_EQ(std::set<std::size_t>(sa.begin(), sa.end()).size(), 4u);
  Rng c(5);
  EXPECT_EQ(select(v, 20, SelectionMode::kRandom, c).size(), 10u);
}

TEST(Select, RandomIsRoughlyUniform) {
  std::vector<AdversarialCandidate> v;
  for (std::size_t i = 0; i < 5; ++i) v.push_back(cand(static_cast<double>(i), 0.8, i));
  std::map<std::size_t, int> hits;
  Rng rng(3);
  const int rounds = 20000;
  for (int r = 0; r < rounds; ++r)
    for (std::size_t id : ids(select(v, 2, SelectionMode::kRandom, rng))) ++hits[id];
  // Each member is drawn with probability 2/5.
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(hits[i] / double(rounds), 0.4, 0.02);
}

TEST(Config, StrategyMapping) {
  const auto full = AttackConfig::for_strategy("dgslow");
  EXPECT_EQ(full.strategy, SearchStrategy::kAdaptive);
  EXPECT_TRUE(full.use_mo && full.use_cf);
  const auto gs = AttackConfig::for_strategy("gs");
  EXPECT_EQ(gs.strategy, SearchStrategy::kGreedy);
  EXPECT_FALSE(gs.use_mo || gs.use_cf);
  EXPECT_EQ(AttackConfig::for_strategy("rs").strategy, SearchStrategy::kRandom);
  const auto d1 = AttackConfig::for_strategy("dgslow1");
  EXPECT_FALSE(d1.use_mo || d1.use_cf);
  EXPECT_TRUE(AttackConfig::for_strategy("dgslow2").use_cf);
  EXPECT_FALSE(AttackConfig::for_strategy("dgslow2").use_mo);
  EXPECT_TRUE(AttackConfig::for_strategy("dgslow3").use_mo);
  EXPECT_FALSE(AttackConfig::for_strategy("dgslow3").use_cf);
  EXPECT_THROW(AttackConfig::for_strategy("beam"), ConfigError);
  EXPECT_EQ(parse_search_strategy(to_string(SearchStrategy::kRandom)), SearchStrategy::kRandom);
}

TEST(Config, RejectsBadValues) {
  AttackConfig c;
  EXPECT_NO_THROW(c.check());
  c.k = 0;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.c1 = 0.7;
  c.c2 = 0.7;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.delta = 1.5;
  EXPECT_THROW(c.check(), ConfigError);
}

AttackOutcome run(std::size_t index, const AttackConfig& cfg, std::uint64_t seed = 7) {
  Rng rng(seed);
  return attack(small_corpus()[index], trained_victim(), cfg, attack_kit().resources(), rng);
}

TEST(Attack, SingleIterationSingleBeam) {
  AttackConfig cfg;
  cfg.T = 1;
  cfg.k = 1;
  const auto o = run(2, cfg);
  ASSERT_EQ(o.trace.size(), 1u);
  if (o.trace[0].valid > 0) {
    EXPECT_EQ(o.perturbed_positions.size(), 1u);
    // root fitness + one gradient call + two per valid candidate
    EXPECT_EQ(o.queries_used, 2u + 1u + 2u * o.trace[0].valid);
  }
  EXPECT_LE(o.queries_used, cfg.query_budget);
}

TEST(Attack, SeededRunsAreIdentical) {
  const auto cfg = AttackConfig::for_strategy("rs");
  for (std::size_t i : {0, 9}) {
    const auto a = run(i, cfg), b = run(i, cfg);
    EXPECT_EQ(a.adversarial_input, b.adversarial_input);
    EXPECT_EQ(a.adversarial_output, b.adversarial_output);
    EXPECT_EQ(a.queries_used, b.queries_used);
    EXPECT_EQ(a.perturbed_positions, b.perturbed_positions);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t) EXPECT_EQ(a.trace[t].beam, b.trace[t].beam);
  }
}

TEST(Attack, BudgetTooSmallForTheFirstEvaluation) {
  AttackConfig cfg;
  cfg.query_budget = 1;
  const auto o = run(0, cfg);
  EXPECT_TRUE(o.budget_exhausted);
  EXPECT_FALSE(o.verdict.success);
  EXPECT_EQ(o.adversarial_input, o.original_input);
  EXPECT_EQ(o.queries_used, 0u);
}

TEST(Attack, NeverExceedsTheBudget) {
  for (std::size_t budget : {2u, 3u, 4u, 7u, 20u, 61u, 150u}) {
    AttackConfig cfg;
    cfg.query_budget = budget;
    for (std::size_t i : {1, 4}) {
      const auto o = run(i, cfg);
      EXPECT_LE(o.queries_used, budget);
      for (const auto& tr : o.trace) EXPECT_LE(tr.queries, budget);
    }
  }
}

TEST(Attack, Invariants) {
  const auto& kit = attack_kit();
  for (const std::string name : {"dgslow", "rs"}) {
    auto cfg = AttackConfig::for_strategy(name);
    cfg.c = 15;
    for (std::size_t i = 0; i < 12; ++i) {
      const auto o = run(i, cfg, 100 + i);
      const Validator validator(o.original_input, cfg.eps, *kit.encoder, kit.checker);
      double prev_best = -1.0;
      for (const auto& tr : o.trace) {
        // every beam member is a valid rewrite of the original
        for (const auto& s : tr.beam) {
          const auto verdict = validator.check(tokenize(s));
          EXPECT_TRUE(verdict.valid) << s;
        }
        EXPECT_LE(tr.beam.size(), cfg.k);
        if (tr.valid > 0) EXPECT_GE(tr.best_fitness, prev_best);
        prev_best = std::max(prev_best, tr.best_fitness);
        if (tr.t == 1 && tr.valid > 0) {
          EXPECT_EQ(tr.xi, 0.0);
          EXPECT_EQ(tr.mode, name == "rs" ? SelectionMode::kRandom : SelectionMode::kGreedy);
        }
      }
      // Each perturbed position was changed once and never restored.
      std::set<std::size_t> changed;
      ASSERT_EQ(o.adversarial_input.size(), o.original_input.size());
      for (std::size_t p = 0; p < o.original_input.size(); ++p)
        if (o.adversarial_input[p] != o.original_input[p]) changed.insert(p);
      EXPECT_EQ(changed, o.perturbed_positions);
      EXPECT_LE(o.perturbed_positions.size(), cfg.T);
      EXPECT_LE(o.queries_used, cfg.query_budget);
      if (!o.perturbed_positions.empty()) {
        EXPECT_GT(o.cosine, cfg.eps);
        EXPECT_LE(o.grammar_errors_after, o.grammar_errors_before);
      }
    }
  }
}

TEST(Attack, ReportedNumbersMatchTheVictim) {
  const auto o = run(6, AttackConfig{});
  const auto& v = trained_victim();
  const auto& inst = small_corpus()[6];
  const auto gen = v.generate(inst, o.adversarial_input);
  EXPECT_EQ(gen.tokens, o.adversarial_output);
  EXPECT_EQ(gen.tokens.size(), o.gl_after);
  double tc = 0.0;
  for (double p : v.score_reference(inst, o.adversarial_input, tokenize(inst.references.front())).token_probs) tc += p;
  EXPECT_NEAR(tc, o.tc_after, 1e-12);
  EXPECT_EQ(v.generate(inst, o.original_input).tokens.size(), o.gl_before);
}

TEST(Attack, LengthensOutputsAndLowersConfidenceOnAverage) {
  const AttackConfig cfg;
  double gl0 = 0, gl1 = 0, tc0 = 0, tc1 = 0;
  const std::size_t n = 50;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(1, i));
    const auto o = attack(small_corpus()[i], trained_victim(), cfg, attack_kit().resources(), rng);
    gl0 += o.gl_before;
    gl1 += o.gl_after;
    tc0 += o.tc_before;
    tc1 += o.tc_after;
  }
  EXPECT_GT(gl1, gl0);
  EXPECT_LT(tc1, tc0);
}

TEST(Attack, RecordCopiesTheOutcome) {
  const auto o = run(3, AttackConfig{});
  const auto r = to_record(o, 42);
  EXPECT_EQ(r.index, 42u);
  EXPECT_EQ(r.gl_after, o.gl_after);
  EXPECT_EQ(r.perturbed_words, o.perturbed_positions.size());
  EXPECT_EQ(r.adversarial_utterance, detokenize(o.adversarial_input));
  EXPECT_EQ(r.queries, o.queries_used);
}

}  // namespace
}  // namespace dgslow
