// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   dgslow_acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "commands.hpp"
#include "dgslow/metrics.hpp"
#include "dgslow/objectives.hpp"
#include "dgslow/search.hpp"
#include "test_support.hpp"

namespace {

using namespace dgslow;
using namespace dgslow::cli;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void pareto_oracle() {
  const auto t0 = Clock::now();
  Rng rng(20240601);
  double worst_gap = -INFINITY;
  bool weights_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const auto dim = static_cast<Eigen::Index>(2 + rng.index(63));
    Eigen::MatrixXd a(1, dim), b(1, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      a(0, j) = rng.normal();
      b(0, j) = rng.normal(0.3, 1.5);
    }
    const double c1 = trial % 4 == 0 ? 0.25 * rng.uniform() : 0.0;
    const double c2 = trial % 4 == 0 ? 0.25 * rng.uniform() : 0.0;
    const auto s = solve_pareto(a, b, c1, c2);
    double grid = INFINITY;
    for (int i = 0; i <= 10000; ++i) {
      const double alpha = i * 1e-4;
      if (alpha < c1 || alpha > 1.0 - c2) continue;
      grid = std::min(grid, (alpha * a + (1.0 - alpha) * b).norm());
    }
    worst_gap = std::max(worst_gap, s.combined_gradient.norm() - grid);
    weights_ok = weights_ok && std::abs(s.alpha[0] + s.alpha[1] - 1.0) < 1e-12 && s.alpha[0] >= c1 &&
                 s.alpha[1] >= c2;
  }
  const double secs = seconds_since(t0);
  report(worst_gap <= 1e-6 && weights_ok && secs < 5.0, "pareto-oracle",
         fmt("200 pairs, worst (solver - grid) norm %.3g (<= 1e-6), weights %s, %.2f s (< 5 s)", worst_gap,
             weights_ok ? "exact" : "VIOLATED", secs));
}

void gradient_check(const ToyVictim& victim) {
  const auto t0 = Clock::now();
  Rng rng(77);
  double worst_ll = 0.0, worst_eos = 0.0, rel_ll = 0.0, rel_eos = 0.0;
  std::size_t entries = 0;
  const int inputs = 20;
  for (int i = 0; i < inputs; ++i) {
    const auto inst = testing::random_instance(victim, 5 + rng.index(6), rng);
    const auto r =
        testing::check_gradients(victim, inst, tokenize(inst.utterance), tokenize(inst.references.front()), 1e-4);
    worst_ll = std::max(worst_ll, r.worst_ll);
    worst_eos = std::max(worst_eos, r.worst_eos);
    rel_ll = std::max(rel_ll, r.rel_ll);
    rel_eos = std::max(rel_eos, r.rel_eos);
    entries += r.entries;
  }
  const double secs = seconds_since(t0);
  // Relative error of the whole gradient per input. Single near-zero entries
  // carry O(h^2) truncation error and are reported for information only.
  report(rel_ll < 1e-4 && rel_eos < 1e-4 && secs < 60.0, "gradient-finite-differences",
         fmt("%d inputs, %zu entries, worst ||g - fd|| / ||fd|| L_ll %.2e, L_eos %.2e (< 1e-4), "
             "worst single entry %.2e / %.2e, %.1f s (< 60 s)",
             inputs, entries, rel_ll, rel_eos, worst_ll, worst_eos, secs));
}

void schedule() {
  bool first_zero = true, bounded = true;
  std::size_t points = 0;
  for (std::size_t T = 1; T <= 10; ++T)
    for (std::size_t t = 1; t <= T; ++t)
      for (int i = 0; i < 1000; ++i) {
        const double q = i / 999.0;
        const double xi = preference(t, T, q);
        if (t == 1 && xi != 0.0) first_zero = false;
        if (!(xi >= 0.0 && xi <= 1.0)) bounded = false;
        ++points;
      }
  const double example = preference(3, 5, 0.8);
  report(first_zero && bounded && std::abs(example - 0.40937) <= 1e-5, "schedule",
         fmt("xi_1 = 0 %s, xi in [0,1] on %zu points %s, xi(3,5,0.8) = %.6f", first_zero ? "yes" : "NO", points,
             bounded ? "yes" : "NO", example));
}

void metric_oracles() {
  const auto w = [](const char* s) { return split_words(s); };
  const auto refs = [&](const char* s) { return std::vector<Tokens>{w(s)}; };
  struct Case {
    const char* name;
    double got, want;
  };
  const std::vector<Case> cases = {
      {"rouge-l the cat / the cat sat", rouge_l(w("the cat"), w("the cat sat")), 0.8},
      {"rouge-l identity", rouge_l(w("a b c"), w("a b c")), 1.0},
      {"rouge-l disjoint", rouge_l(w("a b"), w("c d")), 0.0},
      {"meteor identity m=4", meteor_lite(w("a b c d"), w("a b c d")), 1.0 - 0.5 / 64.0},
      {"meteor b a / a b", meteor_lite(w("b a"), w("a b")), 0.5},
      {"meteor zero matches", meteor_lite(w("x"), w("a b")), 0.0},
      {"bleu identity", bleu(w("the cat sat on the mat"), refs("the cat sat on the mat")), 1.0},
      {"bleu zero overlap", bleu(w("x y z"), refs("a b c")), 0.0},
      {"bleu a b c / a b d", bleu(w("a b c"), refs("a b d")), std::pow(2.0 / 3.0 * 0.5 * 0.5, 0.25)},
      {"bleu six tokens", bleu(w("the cat sat on the mat"), refs("the cat is on the mat")), std::pow(1.0 / 32.0, 0.25)},
  };
  double worst = 0.0;
  std::string bad;
  for (const auto& c : cases) {
    const double err = std::abs(c.got - c.want);
    if (err > 1e-6) bad += std::string(" [") + c.name + "]";
    worst = std::max(worst, err);
  }
  const auto s = score(w("i like fish"), refs("i like cats"));
  const bool mean_ok = std::abs(s.combined - (s.bleu + s.rouge_l + s.meteor_lite) / 3.0) <= 1e-12;
  report(bad.empty() && mean_ok, "metric-oracles",
         fmt("%zu fixture values, worst abs. error %.2e (<= 1e-6)%s", cases.size(), worst, bad.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dgslow_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const auto t_start = Clock::now();

  pareto_oracle();
  schedule();
  metric_oracles();

  // Default corpus and victim, as the CLI would build them.
  const fs::path corpus = work / "corpus.jsonl", ckpt = work / "victim.ckpt";
  cmd_gen_corpus({CorpusSpec{}, corpus, std::nullopt, 32});
  const auto trained = cmd_train_victim({corpus, ckpt, ToyVictimConfig{}, 0.1});
  std::cout << "info victim: held-out TC " << trained.heldout_tc << " vs untrained " << trained.baseline_tc << std::endl;
  const ToyVictim victim = ToyVictim::load(ckpt);
  gradient_check(victim);

  const std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::map<std::string, AttackReport> reports;
  const auto t_attack = Clock::now();
  for (const std::string name : {"dgslow", "gs", "rs"}) {
    AttackRunOptions o;
    o.strategy = name;
    o.config = AttackConfig::for_strategy(name);
    o.corpus = corpus;
    o.checkpoint = ckpt;
    o.limit = 100;
    o.seed = 1;
    o.parallel = threads;
    o.out_dir = work / name;
    reports[name] = cmd_attack(o).report;
    const auto& r = reports[name];
    std::cout << "info " << name << ": ASR " << r.asr << ", GL " << r.mean_gl_original << " -> " << r.mean_gl
              << ", combined " << r.mean_combined_original << " -> " << r.mean_combined << std::endl;
  }
  const double attack_secs = seconds_since(t_attack);

  std::size_t checked = 0, violations = 0;
  for (const auto& [name, rep] : reports)
    for (const auto& rec : rep.records) {
      ++checked;
      const bool ok = rec.verdict.cosine > 0.7 && rec.grammar_errors_after <= rec.grammar_errors_before &&
                      rec.perturbed_words <= 5 && rec.queries <= 2000;
      if (!ok) ++violations;
    }
  report(violations == 0 && checked == 300, "constraint-soundness",
         fmt("%zu adversarials over dgslow/gs/rs, %zu violations of cosine > 0.7, grammar <= original, "
             "<= 5 words, <= 2000 queries",
             checked, violations));

  const auto& full = reports["dgslow"];
  const double ratio = full.mean_gl / full.mean_gl_original;
  const double drop = full.mean_combined_original - full.mean_combined;
  const double asr_d = full.asr, asr_g = reports["gs"].asr, asr_r = reports["rs"].asr;
  report(ratio >= 1.2 && drop > 0.0 && asr_d >= asr_g && asr_g >= asr_r - 0.02 && attack_secs < 600.0,
         "attack-effectiveness",
         fmt("GL %.2f -> %.2f (x%.3f, >= 1.2), combined drop %.4f (> 0), ASR dgslow %.2f >= gs %.2f >= rs %.2f - 0.02, "
             "%.0f s for 300 attacks (< 600 s)",
             full.mean_gl_original, full.mean_gl, ratio, drop, asr_d, asr_g, asr_r, attack_secs));

  auto rerun = load_manifest(work / "dgslow" / "manifest.json");
  rerun.out_dir = work / "dgslow_rerun";
  cmd_attack(rerun);
  const bool same = slurp(work / "dgslow" / "report.json") == slurp(work / "dgslow_rerun" / "report.json");
  report(same, "determinism",
         std::string("report.json from the manifest rerun is ") + (same ? "byte-identical" : "DIFFERENT"));

  std::cout << "info total " << fmt("%.0f", seconds_since(t_start)) << " s, " << failures << " failing" << std::endl;
  return failures == 0 ? 0 : 1;
}
