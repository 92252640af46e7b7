#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dgslow {

using Tokens = std::vector<std::string>;

// Sentence-level BLEU-4 with uniform weights. Clipped n-gram counts take the
// maximum count over references; the brevity penalty uses the reference length
// closest to the candidate (shorter wins ties). Zero-match orders n >= 2 are
// smoothed to 1 / (candidate n-grams + 1); a zero unigram match scores 0.
double bleu(std::span<const std::string> candidate, std::span<const Tokens> references);

// LCS F1, maximum over references.
double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
double rouge_l(std::span<const std::string> candidate, std::span<const Tokens> references);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};

// METEOR without stemming or synonyms: exact matches aligned greedily left to
// right, Fmean = 10PR / (R + 9P), penalty = 0.5 (chunks / matches)^3.
MeteorAlignment meteor_alignment(std::span<const std::string> candidate, std::span<const std::string> reference);
double meteor_lite(std::span<const std::string> candidate, std::span<const std::string> reference);
double meteor_lite(std::span<const std::string> candidate, std::span<const Tokens> references);

inline constexpr const char* kMetricVariant = "bleu4-smoothed/rouge-l-f1/meteor-lite-exact";

struct MetricScores {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  double combined = 0.0;  // mean of the three
};

MetricScores score(std::span<const std::string> candidate, std::span<const Tokens> references);

struct AttackSuccessRecord {
  double cosine = 0.0;
  double metric_drop = 0.0;  // combined(original) - combined(adversarial)
  bool success = false;      // cosine > eps and metric_drop > tau
};

AttackSuccessRecord success(const MetricScores& original, const MetricScores& adversarial, double cosine, double eps,
                            double tau);

// One attacked instance as it appears in a report.
struct InstanceRecord {
  std::size_t index = 0;
  std::string original_utterance;
  std::string adversarial_utterance;
  std::string original_output;
  std::string adversarial_output;
  std::size_t gl_before = 0;
  std::size_t gl_after = 0;
  double tc_before = 0.0;
  double tc_after = 0.0;
  MetricScores original_scores;
  MetricScores adversarial_scores;
  AttackSuccessRecord verdict;
  std::size_t perturbed_words = 0;
  std::size_t grammar_errors_before = 0;
  std::size_t grammar_errors_after = 0;
  std::size_t queries = 0;
  std::size_t iterations = 0;
};

inline constexpr int kReportSchemaVersion = 1;

struct AttackReport {
  int schema_version = kReportSchemaVersion;
  std::string metric_variant = kMetricVariant;
  std::string label;  // strategy or run name
  std::size_t n = 0;
  double asr = 0.0;
  // Averages over adversarial outputs, plus the clean baselines.
  double mean_gl = 0.0;
  double mean_bleu = 0.0;
  double mean_rouge_l = 0.0;
  double mean_meteor_lite = 0.0;
  double mean_cosine = 0.0;
  double mean_gl_original = 0.0;
  double mean_tc = 0.0;
  double mean_tc_original = 0.0;
  double mean_combined = 0.0;
  double mean_combined_original = 0.0;
  double mean_queries = 0.0;
  std::vector<InstanceRecord> records;
};

// Throws EmptyReport for no records.
AttackReport aggregate(std::span<const InstanceRecord> records, std::string label = {});

std::string report_to_json(const AttackReport& report);
// Throws VersionError for another schema version, ParseError for bad JSON.
AttackReport report_from_json(const std::string& text);
AttackReport load_report(const std::filesystem::path& path);

// Header plus one row of the summary columns.
std::string report_summary_csv(const AttackReport& report);
// Header plus one row per record.
std::string report_records_csv(const AttackReport& report);

// Side-by-side comparison shaped like a results table: GL, BLEU, ROUGE-L,
// METEOR-lite, ASR, cosine. Throws VersionError when schema versions or
// metric variants disagree.
struct ComparisonTable {
  std::string text;
  std::string csv;
};
ComparisonTable compare_reports(std::span<const AttackReport> reports);

}  // namespace dgslow
