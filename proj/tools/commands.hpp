#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dgslow/corpus.hpp"
#include "dgslow/metrics.hpp"
#include "dgslow/search.hpp"
#include "dgslow/toy_victim.hpp"

namespace dgslow::cli {

namespace fs = std::filesystem;

inline constexpr const char* kOutDirEnv = "DGSLOW_OUT_DIR";
inline constexpr const char* kEmbeddingsFile = "embeddings.txt";
inline constexpr const char* kAntonymsFile = "antonyms.txt";

struct GenCorpusOptions {
  CorpusSpec spec;
  fs::path out;
  std::optional<fs::path> lexicon_dir;  // defaults to the corpus directory
  std::size_t embed_dim = 32;
};

struct GenCorpusResult {
  std::size_t dialogues = 0;
  std::size_t instances = 0;
  std::size_t vocabulary = 0;
  fs::path embeddings;
  fs::path antonyms;
};

GenCorpusResult cmd_gen_corpus(const GenCorpusOptions& options);

struct TrainOptions {
  fs::path corpus;
  fs::path out;
  ToyVictimConfig config;
  double holdout = 0.1;  // trailing fraction of instances kept out of training
};

struct TrainResult {
  double final_loss = 0.0;
  double heldout_tc = 0.0;
  double baseline_tc = 0.0;  // same instances, untrained weights
  std::size_t train_instances = 0;
  std::size_t heldout_instances = 0;
};

// Throws ConfigError for fewer than 10 instances.
TrainResult cmd_train_victim(const TrainOptions& options, std::ostream* progress = nullptr);

struct AttackRunOptions {
  std::string strategy = "dgslow";
  AttackConfig config = AttackConfig::for_strategy("dgslow");
  fs::path corpus;
  std::optional<fs::path> checkpoint;
  std::optional<std::string> remote_url;
  std::optional<fs::path> embeddings;  // default: beside the corpus
  std::optional<fs::path> antonyms;
  std::uint64_t seed = 1;
  std::size_t offset = 0;
  std::optional<std::size_t> limit;
  std::size_t parallel = 1;
  fs::path out_dir;
};

struct AttackRunResult {
  AttackReport report;
  fs::path report_json;
  fs::path manifest;
  bool partial = false;
};

// Writes report.json, report.csv, records.csv, traces.jsonl and manifest.json
// into out_dir. On a ConnectionError the finished instances are written to
// report.partial.json before the error propagates.
AttackRunResult cmd_attack(const AttackRunOptions& options, std::ostream* progress = nullptr);

std::string manifest_to_json(const AttackRunOptions& options, const std::string& timestamp);
AttackRunOptions manifest_from_json(const std::string& text);
AttackRunOptions load_manifest(const fs::path& path);

// Throws VersionError when the reports disagree on schema.
ComparisonTable cmd_evaluate(const std::vector<fs::path>& reports);

// Output directory from the environment, else "dgslow-out".
fs::path default_out_dir();

}  // namespace dgslow::cli
