#include "dgslow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dgslow/errors.hpp"
#include "json.hpp"

namespace dgslow {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu(std::span<const std::string> candidate, std::span<const Tokens> references) {
  if (candidate.empty() || references.empty()) return 0.0;
  constexpr std::size_t kMaxOrder = 4;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const NgramCounts cand = count_ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references)
      for (const auto& [gram, c] : count_ngrams(ref, n)) max_ref[gram] = std::max(max_ref[gram], c);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, c] : cand) {
      total += c;
      const auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    double p;
    if (matched > 0) {
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      if (n == 1) return 0.0;
      p = 1.0 / static_cast<double>(total + 1);
    }
    log_sum += std::log(p) / static_cast<double>(kMaxOrder);
  }
  const auto c = static_cast<double>(candidate.size());
  double r = 0.0, best_gap = INFINITY;
  for (const auto& ref : references) {
    const auto len = static_cast<double>(ref.size());
    const double gap = std::abs(len - c);
    if (gap < best_gap || (gap == best_gap && len < r)) {
      best_gap = gap;
      r = len;
    }
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double rouge_l(std::span<const std::string> candidate, std::span<const Tokens> references) {
  double best = 0.0;
  for (const auto& ref : references) best = std::max(best, rouge_l(candidate, ref));
  return best;
}

MeteorAlignment meteor_alignment(std::span<const std::string> candidate, std::span<const std::string> reference) {
  MeteorAlignment a;
  if (candidate.empty() || reference.empty()) return a;
  std::vector<bool> used(reference.size(), false);
  std::vector<std::ptrdiff_t> link(candidate.size(), -1);
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      if (!used[j] && candidate[i] == reference[j]) {
        used[j] = true;
        link[i] = static_cast<std::ptrdiff_t>(j);
        ++a.matches;
        break;
      }
    }
  }
  if (a.matches == 0) return a;
  std::ptrdiff_t prev = -2;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (link[i] < 0) {
      prev = -2;
      continue;
    }
    if (link[i] != prev + 1 || prev < 0) ++a.chunks;
    prev = link[i];
  }
  const auto m = static_cast<double>(a.matches);
  a.precision = m / static_cast<double>(candidate.size());
  a.recall = m / static_cast<double>(reference.size());
  a.fmean = 10.0 * a.precision * a.recall / (a.recall + 9.0 * a.precision);
  a.penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
  a.score = a.fmean * (1.0 - a.penalty);
  return a;
}

double meteor_lite(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return meteor_alignment(candidate, reference).score;
}

double meteor_lite(std::span<const std::string> candidate, std::span<const Tokens> references) {
  double best = 0.0;
  for (const auto& ref : references) best = std::max(best, meteor_lite(candidate, ref));
  return best;
}

MetricScores score(std::span<const std::string> candidate, std::span<const Tokens> references) {
  MetricScores s;
  s.bleu = bleu(candidate, references);
  s.rouge_l = rouge_l(candidate, references);
  s.meteor_lite = meteor_lite(candidate, references);
  s.combined = (s.bleu + s.rouge_l + s.meteor_lite) / 3.0;
  return s;
}

AttackSuccessRecord success(const MetricScores& original, const MetricScores& adversarial, double cosine, double eps,
                            double tau) {
  AttackSuccessRecord r;
  r.cosine = cosine;
  r.metric_drop = original.combined - adversarial.combined;
  r.success = cosine > eps && r.metric_drop > tau;
  return r;
}

AttackReport aggregate(std::span<const InstanceRecord> records, std::string label) {
  if (records.empty()) throw EmptyReport();
  AttackReport rep;
  rep.label = std::move(label);
  rep.n = records.size();
  std::size_t wins = 0;
  for (const auto& r : records) {
    wins += r.verdict.success ? 1 : 0;
    rep.mean_gl += static_cast<double>(r.gl_after);
    rep.mean_bleu += r.adversarial_scores.bleu;
    rep.mean_rouge_l += r.adversarial_scores.rouge_l;
    rep.mean_meteor_lite += r.adversarial_scores.meteor_lite;
    rep.mean_cosine += r.verdict.cosine;
    rep.mean_gl_original += static_cast<double>(r.gl_before);
    rep.mean_tc += r.tc_after;
    rep.mean_tc_original += r.tc_before;
    rep.mean_combined += r.adversarial_scores.combined;
    rep.mean_combined_original += r.original_scores.combined;
    rep.mean_queries += static_cast<double>(r.queries);
  }
  const auto n = static_cast<double>(rep.n);
  rep.asr = static_cast<double>(wins) / n;
  for (double* m : {&rep.mean_gl, &rep.mean_bleu, &rep.mean_rouge_l, &rep.mean_meteor_lite, &rep.mean_cosine,
                    &rep.mean_gl_original, &rep.mean_tc, &rep.mean_tc_original, &rep.mean_combined,
                    &rep.mean_combined_original, &rep.mean_queries})
    *m /= n;
  rep.records.assign(records.begin(), records.end());
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using ojson = nlohmann::ordered_json;

ojson scores_json(const MetricScores& s) {
  return ojson{{"bleu", s.bleu}, {"rouge_l", s.rouge_l}, {"meteor_lite", s.meteor_lite}, {"combined", s.combined}};
}

MetricScores scores_from(const ojson& j) {
  return {j.at("bleu").get<double>(), j.at("rouge_l").get<double>(), j.at("meteor_lite").get<double>(),
          j.at("combined").get<double>()};
}

// Summary columns shared by the JSON and CSV forms, in output order.
std::vector<std::pair<const char*, double>> summary_columns(const AttackReport& r) {
  return {{"n", static_cast<double>(r.n)},
          {"asr", r.asr},
          {"mean_gl", r.mean_gl},
          {"mean_bleu", r.mean_bleu},
          {"mean_rouge_l", r.mean_rouge_l},
          {"mean_meteor_lite", r.mean_meteor_lite},
          {"mean_cosine", r.mean_cosine},
          {"mean_gl_original", r.mean_gl_original},
          {"mean_tc", r.mean_tc},
          {"mean_tc_original", r.mean_tc_original},
          {"mean_combined", r.mean_combined},
          {"mean_combined_original", r.mean_combined_original},
          {"mean_queries", r.mean_queries}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string report_to_json(const AttackReport& report) {
  ojson j;
  j["schema_version"] = report.schema_version;
  j["metric_variant"] = report.metric_variant;
  j["label"] = report.label;
  j["n"] = report.n;
  for (const auto& [name, value] : summary_columns(report))
    if (std::string_view(name) != "n") j[name] = value;
  ojson recs = ojson::array();
  for (const auto& r : report.records) {
    recs.push_back(ojson{{"index", r.index},
                         {"original_utterance", r.original_utterance},
                         {"adversarial_utterance", r.adversarial_utterance},
                         {"original_output", r.original_output},
                         {"adversarial_output", r.adversarial_output},
                         {"gl_before", r.gl_before},
                         {"gl_after", r.gl_after},
                         {"tc_before", r.tc_before},
                         {"tc_after", r.tc_after},
                         {"original_scores", scores_json(r.original_scores)},
                         {"adversarial_scores", scores_json(r.adversarial_scores)},
                         {"cosine", r.verdict.cosine},
                         {"metric_drop", r.verdict.metric_drop},
                         {"success", r.verdict.success},
                         {"perturbed_words", r.perturbed_words},
                         {"grammar_errors_before", r.grammar_errors_before},
                         {"grammar_errors_after", r.grammar_errors_after},
                         {"queries", r.queries},
                         {"iterations", r.iterations}});
  }
  j["records"] = std::move(recs);
  return j.dump(2) + "\n";
}

AttackReport report_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ParseError(1, e.what());
  }
  if (!j.is_object() || !j.contains("schema_version"))
    throw VersionError("report has no schema_version field");
  const int version = j.at("schema_version").get<int>();
  if (version != kReportSchemaVersion)
    throw VersionError("report schema version " + std::to_string(version) + ", expected " +
                       std::to_string(kReportSchemaVersion));
  try {
    AttackReport rep;
    rep.schema_version = version;
    rep.metric_variant = j.at("metric_variant").get<std::string>();
    rep.label = j.value("label", std::string());
    rep.n = j.at("n").get<std::size_t>();
    rep.asr = j.at("asr").get<double>();
    rep.mean_gl = j.at("mean_gl").get<double>();
    rep.mean_bleu = j.at("mean_bleu").get<double>();
    rep.mean_rouge_l = j.at("mean_rouge_l").get<double>();
    rep.mean_meteor_lite = j.at("mean_meteor_lite").get<double>();
    rep.mean_cosine = j.at("mean_cosine").get<double>();
    rep.mean_gl_original = j.value("mean_gl_original", 0.0);
    rep.mean_tc = j.value("mean_tc", 0.0);
    rep.mean_tc_original = j.value("mean_tc_original", 0.0);
    rep.mean_combined = j.value("mean_combined", 0.0);
    rep.mean_combined_original = j.value("mean_combined_original", 0.0);
    rep.mean_queries = j.value("mean_queries", 0.0);
    for (const auto& r : j.at("records")) {
      InstanceRecord rec;
      rec.index = r.at("index").get<std::size_t>();
      rec.original_utterance = r.at("original_utterance").get<std::string>();
      rec.adversarial_utterance = r.at("adversarial_utterance").get<std::string>();
      rec.original_output = r.at("original_output").get<std::string>();
      rec.adversarial_output = r.at("adversarial_output").get<std::string>();
      rec.gl_before = r.at("gl_before").get<std::size_t>();
      rec.gl_after = r.at("gl_after").get<std::size_t>();
      rec.tc_before = r.at("tc_before").get<double>();
      rec.tc_after = r.at("tc_after").get<double>();
      rec.original_scores = scores_from(r.at("original_scores"));
      rec.adversarial_scores = scores_from(r.at("adversarial_scores"));
      rec.verdict = {r.at("cosine").get<double>(), r.at("metric_drop").get<double>(), r.at("success").get<bool>()};
      rec.perturbed_words = r.at("perturbed_words").get<std::size_t>();
      rec.grammar_errors_before = r.at("grammar_errors_before").get<std::size_t>();
      rec.grammar_errors_after = r.at("grammar_errors_after").get<std::size_t>();
      rec.queries = r.at("queries").get<std::size_t>();
      rec.iterations = r.at("iterations").get<std::size_t>();
      rep.records.push_back(std::move(rec));
    }
    return rep;
  } catch (const ojson::exception& e) {
    throw VersionError(std::string("report does not match schema: ") + e.what());
  }
}

AttackReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open report: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

std::string report_summary_csv(const AttackReport& report) {
  const auto cols = summary_columns(report);
  std::string head = "label", row = csv_field(report.label);
  for (const auto& [name, value] : cols) {
    head += std::string(",") + name;
    row += "," + (std::string_view(name) == "n" ? std::to_string(report.n) : num(value));
  }
  return head + "\n" + row + "\n";
}

std::string report_records_csv(const AttackReport& report) {
  std::string out =
      "index,original_utterance,adversarial_utterance,original_output,adversarial_output,gl_before,gl_after,"
      "tc_before,tc_after,bleu_before,rouge_l_before,meteor_lite_before,combined_before,bleu_after,rouge_l_after,"
      "meteor_lite_after,combined_after,cosine,metric_drop,success,perturbed_words,grammar_errors_before,"
      "grammar_errors_after,queries,iterations\n";
  for (const auto& r : report.records) {
    std::ostringstream row;
    row << r.index << ',' << csv_field(r.original_utterance) << ',' << csv_field(r.adversarial_utterance) << ','
        << csv_field(r.original_output) << ',' << csv_field(r.adversarial_output) << ',' << r.gl_before << ','
        << r.gl_after << ',' << num(r.tc_before) << ',' << num(r.tc_after) << ',' << num(r.original_scores.bleu)
        << ',' << num(r.original_scores.rouge_l) << ',' << num(r.original_scores.meteor_lite) << ','
        << num(r.original_scores.combined) << ',' << num(r.adversarial_scores.bleu) << ','
        << num(r.adversarial_scores.rouge_l) << ',' << num(r.adversarial_scores.meteor_lite) << ','
        << num(r.adversarial_scores.combined) << ',' << num(r.verdict.cosine) << ',' << num(r.verdict.metric_drop)
        << ',' << (r.verdict.success ? 1 : 0) << ',' << r.perturbed_words << ',' << r.grammar_errors_before << ','
        << r.grammar_errors_after << ',' << r.queries << ',' << r.iterations << '\n';
    out += row.str();
  }
  return out;
}

ComparisonTable compare_reports(std::span<const AttackReport> reports) {
  if (reports.empty()) throw EmptyReport();
  for (const auto& r : reports) {
    if (r.schema_version != reports.front().schema_version)
      throw VersionError("reports mix schema versions " + std::to_string(reports.front().schema_version) + " and " +
                         std::to_string(r.schema_version));
    if (r.metric_variant != reports.front().metric_variant)
      throw VersionError("reports mix metric variants '" + reports.front().metric_variant + "' and '" +
                         r.metric_variant + "'");
  }
  ComparisonTable t;
  std::ostringstream text;
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.label.size());
  text << std::left << std::setw(static_cast<int>(width)) << "run" << std::right << std::setw(8) << "GL"
       << std::setw(8) << "BLEU" << std::setw(8) << "ROU." << std::setw(8) << "MET." << std::setw(8) << "ASR"
       << std::setw(8) << "Cos." << std::setw(6) << "n" << '\n';
  t.csv = "run,gl,bleu,rouge_l,meteor_lite,asr,cosine,n\n";
  text << std::fixed;
  for (const auto& r : reports) {
    text << std::left << std::setw(static_cast<int>(width)) << r.label << std::right << std::setprecision(2)
         << std::setw(8) << r.mean_gl << std::setw(8) << 100.0 * r.mean_bleu << std::setw(8)
         << 100.0 * r.mean_rouge_l << std::setw(8) << 100.0 * r.mean_meteor_lite << std::setw(8) << 100.0 * r.asr
         << std::setprecision(3) << std::setw(8) << r.mean_cosine << std::setw(6) << r.n << '\n';
    t.csv += csv_field(r.label) + "," + num(r.mean_gl) + "," + num(r.mean_bleu) + "," + num(r.mean_rouge_l) + "," +
             num(r.mean_meteor_lite) + "," + num(r.asr) + "," + num(r.mean_cosine) + "," + std::to_string(r.n) + "\n";
  }
  t.text = text.str();
  return t;
}

}  // namespace dgslow
