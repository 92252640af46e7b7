// dgslow: generate corpora, train the toy victim, run attacks, compare reports.
//
// Exit status: 0 on success, 1 on a usage error, 2 on a runtime failure.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "dgslow/errors.hpp"

namespace {

using namespace dgslow;
using namespace dgslow::cli;

void add_attack_flags(CLI::App& cmd, AttackRunOptions& o, std::string& strategy) {
  cmd.add_option("--corpus", o.corpus, "JSONL corpus");
  cmd.add_option("--checkpoint", o.checkpoint, "toy victim checkpoint");
  cmd.add_option("--remote", o.remote_url, "remote victim URL (http://host:port)");
  cmd.add_option("--embeddings", o.embeddings, "word vectors (default: embeddings.txt beside the corpus)");
  cmd.add_option("--antonyms", o.antonyms, "antonym list (default: antonyms.txt beside the corpus)");
  cmd.add_option("--strategy", strategy, "dgslow | gs | rs | dgslow1 | dgslow2 | dgslow3")
      ->check(CLI::IsMember(AttackConfig::strategy_names()));
  cmd.add_option("--seed", o.seed, "base seed; instance i uses a seed derived from (seed, i)");
  cmd.add_option("--offset", o.offset, "first corpus instance to attack");
  cmd.add_option("--limit", o.limit, "number of instances to attack (default: all)");
  cmd.add_option("--parallel", o.parallel, "instances attacked concurrently")->check(CLI::PositiveNumber);
  cmd.add_option("--out-dir", o.out_dir, std::string("output directory (default: $") + kOutDirEnv + " or dgslow-out)");
}

void add_tuning_flags(CLI::App& cmd, AttackConfig& c) {
  cmd.add_option("--eps", c.eps, "similarity threshold")->capture_default_str();
  cmd.add_option("--tau", c.tau, "metric-drop threshold")->capture_default_str();
  cmd.add_option("--beta", c.beta, "hinge weight in the stop loss")->capture_default_str();
  cmd.add_option("--c1", c.c1, "lower bound on the likelihood weight")->capture_default_str();
  cmd.add_option("--c2", c.c2, "lower bound on the stop weight")->capture_default_str();
  cmd.add_option("-c,--candidates", c.c, "candidates per position")->capture_default_str();
  cmd.add_option("--delta", c.delta, "preference threshold")->capture_default_str();
  cmd.add_option("-k,--beam", c.k, "beam size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("-T,--iterations", c.T, "iterations")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_option("--budget", c.query_budget, "query budget per instance")->capture_default_str();
  cmd.add_option("--positions", c.positions_per_candidate, "positions expanded per beam member")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-objective slowdown attacks on dialogue generation models"};
  app.require_subcommand(1);

  // gen-corpus
  GenCorpusOptions gen;
  std::string lexicon_dir;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "write a synthetic dialogue corpus plus its word vectors");
  gen_cmd->add_option("--seed", gen.spec.seed, "corpus seed")->capture_default_str();
  gen_cmd->add_option("-n,--n", gen.spec.num_dialogues, "dialogues")->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("--turns", gen.spec.turns_per_dialogue, "turns per dialogue")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--grammar", gen.spec.template_grammar, "template grammar")
      ->capture_default_str()
      ->check(CLI::IsMember(known_grammars()));
  gen_cmd->add_option("--embed-dim", gen.embed_dim, "word vector size")->capture_default_str()->check(CLI::PositiveNumber);
  gen_cmd->add_option("-o,--out", gen.out, "output JSONL")->required();
  gen_cmd->add_option("--lexicon-dir", lexicon_dir, "where embeddings.txt and antonyms.txt go (default: beside --out)");

  // train-victim
  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train-victim", "train the toy encoder-decoder on a corpus");
  train_cmd->add_option("--corpus", train.corpus, "JSONL corpus")->required();
  train_cmd->add_option("-o,--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--embed-dim", train.config.embed_dim)->capture_default_str();
  train_cmd->add_option("--hidden-dim", train.config.hidden_dim)->capture_default_str();
  train_cmd->add_option("--max-len", train.config.max_decode_len, "decode length cap")->capture_default_str();
  train_cmd->add_option("--epochs", train.config.train_epochs)->capture_default_str();
  train_cmd->add_option("--lr", train.config.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch", train.config.batch_size)->capture_default_str();
  train_cmd->add_option("--seed", train.config.seed)->capture_default_str();
  train_cmd->add_option("--holdout", train.holdout, "trailing fraction kept for evaluation")->capture_default_str();

  // attack
  AttackRunOptions run;
  std::string strategy = "dgslow";
  std::string manifest;
  auto* attack_cmd = app.add_subcommand("attack", "attack every selected instance and write a report");
  add_attack_flags(*attack_cmd, run, strategy);
  AttackConfig tuning = AttackConfig::for_strategy("dgslow");
  add_tuning_flags(*attack_cmd, tuning);
  attack_cmd->add_option("--manifest", manifest, "re-run the attack described by a manifest.json");

  // evaluate
  std::vector<std::string> reports;
  std::string csv_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "compare attack reports side by side");
  eval_cmd->add_option("reports", reports, "report.json files")->required();
  eval_cmd->add_option("--csv", csv_out, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) {
      if (!lexicon_dir.empty()) gen.lexicon_dir = lexicon_dir;
      const auto r = cmd_gen_corpus(gen);
      std::cout << "dialogues " << r.dialogues << "\ninstances " << r.instances << "\nvocabulary " << r.vocabulary
                << "\ncorpus " << gen.out.string() << "\nembeddings " << r.embeddings.string() << "\nantonyms "
                << r.antonyms.string() << '\n';
    } else if (*train_cmd) {
      const auto r = cmd_train_victim(train, &std::cerr);
      std::cout << "train_instances " << r.train_instances << "\nheldout_instances " << r.heldout_instances
                << "\nfinal_loss " << r.final_loss << "\nheldout_tc " << r.heldout_tc << "\nbaseline_tc "
                << r.baseline_tc << "\ncheckpoint " << train.out.string() << '\n';
    } else if (*attack_cmd) {
      if (!manifest.empty()) {
        const fs::path out_dir = run.out_dir;
        run = load_manifest(manifest);
        if (!out_dir.empty()) run.out_dir = out_dir;
      } else {
        if (run.corpus.empty()) throw CLI::RequiredError("--corpus");
        const bool has_victim = run.checkpoint.has_value() || run.remote_url.has_value();
        if (!has_victim) throw CLI::RequiredError("--checkpoint or --remote");
        run.strategy = strategy;
        AttackConfig mapped = AttackConfig::for_strategy(strategy);
        mapped.eps = tuning.eps;
        mapped.tau = tuning.tau;
        mapped.beta = tuning.beta;
        mapped.c1 = tuning.c1;
        mapped.c2 = tuning.c2;
        mapped.c = tuning.c;
        mapped.delta = tuning.delta;
        mapped.k = tuning.k;
        mapped.T = tuning.T;
        mapped.query_budget = tuning.query_budget;
        mapped.positions_per_candidate = tuning.positions_per_candidate;
        run.config = mapped;
      }
      if (run.out_dir.empty()) run.out_dir = default_out_dir();
      const auto r = cmd_attack(run, &std::cerr);
      std::cout << compare_reports(std::span(&r.report, 1)).text << "report " << r.report_json.string()
                << "\nmanifest " << r.manifest.string() << '\n';
    } else if (*eval_cmd) {
      std::vector<fs::path> paths(reports.begin(), reports.end());
      const auto table = cmd_evaluate(paths);
      std::cout << table.text;
      if (!csv_out.empty()) {
        std::ofstream out(csv_out, std::ios::binary);
        if (!(out << table.csv)) throw IOError("cannot write " + csv_out);
      }
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << " is required\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
