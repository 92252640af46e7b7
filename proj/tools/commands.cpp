#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "dgslow/errors.hpp"
#include "dgslow/objectives.hpp"
#include "dgslow/perturber.hpp"
#include "dgslow/remote_victim.hpp"
#include "json.hpp"

namespace dgslow::cli {

using ojson = nlohmann::ordered_json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOError("cannot write " + path.string());
  out << text;
  if (!out) throw IOError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path beside(const fs::path& file, const char* name) {
  const fs::path dir = file.parent_path();
  return dir.empty() ? fs::path(name) : dir / name;
}

double mean_tc(const ToyVictim& victim, std::span<const DialogueInstance> instances) {
  double sum = 0.0;
  for (const auto& inst : instances)
    sum += compute_tc(victim.score_reference(inst, tokenize(inst.utterance), tokenize(inst.references.front())));
  return instances.empty() ? 0.0 : sum / static_cast<double>(instances.size());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

ojson trace_json(const AttackOutcome& o, std::size_t index) {
  ojson iters = ojson::array();
  for (const auto& t : o.trace)
    iters.push_back(ojson{{"t", t.t},
                          {"valid", t.valid},
                          {"q", t.q},
                          {"xi", t.xi},
                          {"mode", std::string(to_string(t.mode))},
                          {"beam", t.beam},
                          {"beam_fitness", t.beam_fitness},
                          {"best_fitness", t.best_fitness},
                          {"queries", t.queries}});
  return ojson{{"index", index},
               {"queries_used", o.queries_used},
               {"budget_exhausted", o.budget_exhausted},
               {"perturbed_positions", o.perturbed_positions},
               {"iterations", std::move(iters)}};
}

}  // namespace

fs::path default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? fs::path(env) : fs::path("dgslow-out");
}

GenCorpusResult cmd_gen_corpus(const GenCorpusOptions& options) {
  if (options.spec.num_dialogues == 0 || options.spec.turns_per_dialogue == 0)
    throw ConfigError("corpus needs at least one dialogue and one turn");
  const auto instances = generate_synthetic_corpus(options.spec);
  if (options.out.has_parent_path()) ensure_dir(options.out.parent_path());
  write_jsonl(options.out, instances);

  const fs::path dir = options.lexicon_dir ? *options.lexicon_dir : options.out.parent_path();
  if (!dir.empty()) ensure_dir(dir);
  const SyntheticLexicon lex = synthetic_lexicon(options.spec.template_grammar, options.spec.seed, options.embed_dim);
  GenCorpusResult r;
  r.embeddings = dir.empty() ? fs::path(kEmbeddingsFile) : dir / kEmbeddingsFile;
  r.antonyms = dir.empty() ? fs::path(kAntonymsFile) : dir / kAntonymsFile;
  EmbeddingTable::from_lexicon(lex).save(r.embeddings);
  AntonymLexicon(lex.antonyms).save(r.antonyms);
  r.dialogues = options.spec.num_dialogues;
  r.instances = instances.size();
  r.vocabulary = Vocabulary::from_corpus(instances).size() - 5;
  return r;
}

TrainResult cmd_train_victim(const TrainOptions& options, std::ostream* progress) {
  options.config.check();
  if (!(options.holdout >= 0.0 && options.holdout < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  const auto loaded = load_jsonl(options.corpus);
  const auto& all = loaded.instances;
  if (all.size() < 10)
    throw ConfigError("corpus has " + std::to_string(all.size()) + " instances; training needs at least 10");
  const auto held = static_cast<std::size_t>(static_cast<double>(all.size()) * options.holdout);
  const std::span<const DialogueInstance> train(all.data(), all.size() - held);
  const std::span<const DialogueInstance> test(all.data() + train.size(), held);

  // The vocabulary covers the whole corpus so held-out words are not UNK.
  ToyVictim victim(Vocabulary::from_corpus(all), options.config);
  TrainResult r;
  r.train_instances = train.size();
  r.heldout_instances = test.size();
  r.baseline_tc = mean_tc(victim, test);
  const TrainingReport rep = victim.train(train, [&](std::size_t epoch, double loss) {
    if (progress) *progress << "epoch " << epoch + 1 << "/" << options.config.train_epochs << " loss " << loss << '\n';
  });
  r.final_loss = rep.final_loss;
  r.heldout_tc = mean_tc(victim, test);
  if (options.out.has_parent_path()) ensure_dir(options.out.parent_path());
  victim.save(options.out);
  return r;
}

std::string manifest_to_json(const AttackRunOptions& o, const std::string& timestamp) {
  const AttackConfig& c = o.config;
  ojson victim = o.remote_url ? ojson{{"kind", "remote"}, {"url", *o.remote_url}}
                              : ojson{{"kind", "toy"}, {"checkpoint", o.checkpoint ? o.checkpoint->string() : ""}};
  ojson j{{"manifest_version", 1},
          {"strategy", o.strategy},
          {"config",
           ojson{{"eps", c.eps},
                 {"tau", c.tau},
                 {"beta", c.beta},
                 {"c1", c.c1},
                 {"c2", c.c2},
                 {"c", c.c},
                 {"delta", c.delta},
                 {"k", c.k},
                 {"T", c.T},
                 {"query_budget", c.query_budget},
                 {"positions_per_candidate", c.positions_per_candidate},
                 {"search", std::string(to_string(c.strategy))},
                 {"use_mo", c.use_mo},
                 {"use_cf", c.use_cf}}},
          {"corpus", o.corpus.string()},
          {"victim", victim},
          {"embeddings", o.embeddings ? o.embeddings->string() : beside(o.corpus, kEmbeddingsFile).string()},
          {"antonyms", o.antonyms ? o.antonyms->string() : beside(o.corpus, kAntonymsFile).string()},
          {"seed", o.seed},
          {"offset", o.offset},
          {"limit", o.limit ? ojson(*o.limit) : ojson(nullptr)},
          {"parallel", o.parallel},
          {"output_dir", o.out_dir.string()},
          {"timestamp", timestamp}};
  return j.dump(2) + "\n";
}

AttackRunOptions manifest_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ParseError(1, std::string("manifest: ") + e.what());
  }
  if (j.value("manifest_version", 0) != 1) throw VersionError("unsupported manifest version");
  try {
    AttackRunOptions o;
    o.strategy = j.at("strategy").get<std::string>();
    const auto& c = j.at("config");
    o.config.eps = c.at("eps").get<double>();
    o.config.tau = c.at("tau").get<double>();
    o.config.beta = c.at("beta").get<double>();
    o.config.c1 = c.at("c1").get<double>();
    o.config.c2 = c.at("c2").get<double>();
    o.config.c = c.at("c").get<std::size_t>();
    o.config.delta = c.at("delta").get<double>();
    o.config.k = c.at("k").get<std::size_t>();
    o.config.T = c.at("T").get<std::size_t>();
    o.config.query_budget = c.at("query_budget").get<std::size_t>();
    o.config.positions_per_candidate = c.at("positions_per_candidate").get<std::size_t>();
    o.config.strategy = parse_search_strategy(c.at("search").get<std::string>());
    o.config.use_mo = c.at("use_mo").get<bool>();
    o.config.use_cf = c.at("use_cf").get<bool>();
    o.corpus = j.at("corpus").get<std::string>();
    const auto& v = j.at("victim");
    if (v.at("kind") == "remote")
      o.remote_url = v.at("url").get<std::string>();
    else
      o.checkpoint = fs::path(v.at("checkpoint").get<std::string>());
    o.embeddings = fs::path(j.at("embeddings").get<std::string>());
    o.antonyms = fs::path(j.at("antonyms").get<std::string>());
    o.seed = j.at("seed").get<std::uint64_t>();
    o.offset = j.at("offset").get<std::size_t>();
    if (!j.at("limit").is_null()) o.limit = j.at("limit").get<std::size_t>();
    o.parallel = j.value("parallel", std::size_t{1});
    o.out_dir = j.at("output_dir").get<std::string>();
    return o;
  } catch (const ojson::exception& e) {
    throw ConfigError(std::string("manifest does not match schema: ") + e.what());
  }
}

AttackRunOptions load_manifest(const fs::path& path) { return manifest_from_json(read_text(path)); }

AttackRunResult cmd_attack(const AttackRunOptions& options, std::ostream* progress) {
  options.config.check();
  if (options.parallel < 1) throw ConfigError("--parallel must be >= 1");
  if (options.checkpoint.has_value() == options.remote_url.has_value())
    throw ConfigError("give exactly one of a toy checkpoint or a remote URL");

  const auto corpus = load_jsonl(options.corpus).instances;
  const std::size_t begin = std::min(options.offset, corpus.size());
  const std::size_t end = options.limit ? std::min(corpus.size(), begin + *options.limit) : corpus.size();
  if (begin == end) throw ConfigError("no instances selected from " + options.corpus.string());

  std::unique_ptr<VictimModel> victim;
  if (options.remote_url)
    victim = connect_remote(*options.remote_url);
  else
    victim = std::make_unique<ToyVictim>(ToyVictim::load(*options.checkpoint));

  const auto table = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::load(options.embeddings ? *options.embeddings : beside(options.corpus, kEmbeddingsFile)));
  const auto antonyms = std::make_shared<const AntonymLexicon>(
      AntonymLexicon::load(options.antonyms ? *options.antonyms : beside(options.corpus, kAntonymsFile)));
  const StaticEmbeddingGenerator generator(table, antonyms);
  const MeanEmbeddingEncoder encoder(table);
  const RuleGrammarChecker checker;
  const AttackResources resources{&generator, &encoder, &checker};

  const std::size_t n = end - begin;
  std::vector<std::optional<AttackOutcome>> outcomes(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !failed; i = next++) {
      const std::size_t index = begin + i;
      try {
        Rng rng(derive_seed(options.seed, index));
        outcomes[i] = attack(corpus[index], *victim, options.config, resources, rng);
        if (progress) {
          std::lock_guard lock(mu);
          *progress << "instance " << index << ": gl " << outcomes[i]->gl_before << " -> " << outcomes[i]->gl_after
                    << (outcomes[i]->verdict.success ? " success" : " failure") << '\n';
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t threads = std::min(options.parallel, n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ensure_dir(options.out_dir);
  std::vector<InstanceRecord> records;
  std::string traces;
  for (std::size_t i = 0; i < n; ++i) {
    if (!outcomes[i]) continue;
    records.push_back(to_record(*outcomes[i], begin + i));
    traces += trace_json(*outcomes[i], begin + i).dump() + "\n";
  }

  AttackRunResult result;
  result.manifest = options.out_dir / "manifest.json";
  write_text(result.manifest, manifest_to_json(options, utc_timestamp()));
  if (error) {
    result.partial = true;
    if (!records.empty()) {
      write_text(options.out_dir / "report.partial.json", report_to_json(aggregate(records, options.strategy)));
      write_text(options.out_dir / "traces.partial.jsonl", traces);
    }
    std::rethrow_exception(error);
  }
  result.report = aggregate(records, options.strategy);
  result.report_json = options.out_dir / "report.json";
  write_text(result.report_json, report_to_json(result.report));
  write_text(options.out_dir / "report.csv", report_summary_csv(result.report));
  write_text(options.out_dir / "records.csv", report_records_csv(result.report));
  write_text(options.out_dir / "traces.jsonl", traces);
  return result;
}

ComparisonTable cmd_evaluate(const std::vector<fs::path>& paths) {
  std::vector<AttackReport> reports;
  for (const auto& p : paths) {
    reports.push_back(load_report(p));
    if (reports.back().label.empty()) reports.back().label = p.parent_path().filename().string();
  }
  return compare_reports(reports);
}

}  // namespace dgslow::cli
