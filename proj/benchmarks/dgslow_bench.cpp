#include <benchmark/benchmark.h>

#include "dgslow/metrics.hpp"
#include "dgslow/objectives.hpp"
#include "dgslow/perturber.hpp"
#include "dgslow/rng.hpp"
#include "dgslow/search.hpp"
#include "dgslow/toy_victim.hpp"

namespace {

using namespace dgslow;

const std::vector<DialogueInstance>& corpus() {
  static const auto c = generate_synthetic_corpus(CorpusSpec{1, 40, 4, "persona_chat_v1"});
  return c;
}

const ToyVictim& victim() {
  static const ToyVictim v = [] {
    ToyVictimConfig cfg;
    cfg.train_epochs = 4;
    ToyVictim m(Vocabulary::from_corpus(corpus()), cfg);
    m.train(corpus());
    return m;
  }();
  return v;
}

struct Kit {
  std::shared_ptr<const EmbeddingTable> table;
  std::shared_ptr<const AntonymLexicon> antonyms;
  StaticEmbeddingGenerator generator;
  MeanEmbeddingEncoder encoder;
  RuleGrammarChecker checker;
};

const Kit& kit() {
  static const Kit k = [] {
    const auto lex = synthetic_lexicon("persona_chat_v1", 1);
    auto table = std::make_shared<const EmbeddingTable>(EmbeddingTable::from_lexicon(lex));
    auto ant = std::make_shared<const AntonymLexicon>(lex.antonyms);
    return Kit{table, ant, StaticEmbeddingGenerator(table, ant), MeanEmbeddingEncoder(table), {}};
  }();
  return k;
}

void BM_Generate(benchmark::State& state) {
  const auto& inst = corpus()[state.range(0)];
  const auto utt = tokenize(inst.utterance);
  const auto& v = victim();
  for (auto _ : state) benchmark::DoNotOptimize(v.generate(inst, utt));
}
BENCHMARK(BM_Generate)->Arg(0)->Arg(3);

void BM_ScoreReference(benchmark::State& state) {
  const auto& inst = corpus()[3];
  const auto utt = tokenize(inst.utterance);
  const auto ref = tokenize(inst.references.front());
  const auto& v = victim();
  for (auto _ : state) benchmark::DoNotOptimize(v.score_reference(inst, utt, ref));
}
BENCHMARK(BM_ScoreReference);

void BM_Gradients(benchmark::State& state) {
  const auto& inst = corpus()[state.range(0)];
  const auto utt = tokenize(inst.utterance);
  const auto ref = tokenize(inst.references.front());
  const auto& v = victim();
  for (auto _ : state) benchmark::DoNotOptimize(v.gradients(inst, utt, ref, {}));
}
BENCHMARK(BM_Gradients)->Arg(0)->Arg(3);

void BM_SolvePareto(benchmark::State& state) {
  Rng rng(1);
  const auto rows = static_cast<Eigen::Index>(state.range(0));
  Eigen::MatrixXd a(rows, 32), b(rows, 32);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal();
    b.data()[i] = rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(solve_pareto(a, b));
}
BENCHMARK(BM_SolvePareto)->Arg(16)->Arg(128);

void BM_Candidates(benchmark::State& state) {
  const auto s = tokenize("i love to go hiking with my dog on weekends .");
  const auto c = static_cast<std::size_t>(state.range(0));
  kit();
  for (auto _ : state) benchmark::DoNotOptimize(kit().generator.candidates(s, 1, c));
}
BENCHMARK(BM_Candidates)->Arg(10)->Arg(50);

void BM_Validate(benchmark::State& state) {
  const auto orig = tokenize("i love to go hiking with my dog on weekends .");
  const Validator v(orig, 0.7, kit().encoder, kit().checker);
  const auto cand = substitute(orig, 1, "like");
  for (auto _ : state) benchmark::DoNotOptimize(v.check(cand));
}
BENCHMARK(BM_Validate);

void BM_Metrics(benchmark::State& state) {
  const Tokens cand = split_words("i like to walk my dog in the park every single morning");
  const std::vector<Tokens> refs{split_words("i walk my dog in the park every morning"),
                                 split_words("my dog and i go to the park")};
  for (auto _ : state) benchmark::DoNotOptimize(score(cand, refs));
}
BENCHMARK(BM_Metrics);

void BM_AttackInstance(benchmark::State& state) {
  const Kit& k = kit();
  const AttackResources res{&k.generator, &k.encoder, &k.checker};
  const AttackConfig cfg;
  const auto& v = victim();
  std::size_t i = 0;
  for (auto _ : state) {
    Rng rng(derive_seed(1, i));
    benchmark::DoNotOptimize(attack(corpus()[i % 40], v, cfg, res, rng));
    ++i;
  }
}
BENCHMARK(BM_AttackInstance)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
