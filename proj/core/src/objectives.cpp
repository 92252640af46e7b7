#include "dgslow/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgslow/errors.hpp"

namespace dgslow {

double compute_tc(std::span<const double> token_probs) {
  if (token_probs.empty()) throw ContractError("targeted confidence needs at least one reference token");
  return std::accumulate(token_probs.begin(), token_probs.end(), 0.0);
}

LogLikelihood loss_ll(std::span<const double> token_probs) {
  LogLikelihood out;
  for (double p : token_probs) {
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      out.clamped = true;
    }
    out.value += std::log(p);
  }
  return out;
}

double loss_eos(const GenerationResult& gen, std::size_t eos_token_id) {
  if (gen.step_logits.rows() > 0) {
    const auto eos = static_cast<Eigen::Index>(eos_token_id);
    if (eos >= gen.step_logits.cols()) throw ContractError("eos token id outside the logit rows");
    double total = 0.0;
    for (Eigen::Index t = 0; t < gen.step_logits.rows(); ++t) {
      const Eigen::VectorXd row = gen.step_logits.row(t).transpose();
      const double m = row.maxCoeff();
      const Eigen::ArrayXd e = (row.array() - m).exp();
      const double expected = (e * row.array()).sum() / e.sum();
      total += row[eos] - expected;
    }
    return total;
  }
  if (!gen.step_stats.empty()) {
    double total = 0.0;
    for (const auto& s : gen.step_stats) total += s.eos_logit - s.expected_logit;
    return total;
  }
  throw ContractError("generation result carries no per-step logits");
}

double loss_reg(double rho, double eps) { return std::max(0.0, eps - rho); }

double loss_stop(double l_eos, double l_reg, double beta) { return l_eos + beta * l_reg; }

ObjectiveValues evaluate_objectives(const GenerationResult& gen, const ReferenceScore& score, std::size_t eos_token_id,
                                    double rho, double eps, double beta) {
  ObjectiveValues v;
  v.tc = compute_tc(score);
  v.gl = gen.length();
  v.l_ll = loss_ll(score).value;
  v.l_eos = loss_eos(gen, eos_token_id);
  v.l_reg = loss_reg(rho, eps);
  v.l_stop = loss_stop(v.l_eos, v.l_reg, beta);
  return v;
}

ParetoSolution solve_pareto(const Eigen::Ref<const Eigen::MatrixXd>& g_ll,
                            const Eigen::Ref<const Eigen::MatrixXd>& g_stop, double c1, double c2) {
  if (g_ll.rows() != g_stop.rows() || g_ll.cols() != g_stop.cols())
    throw ContractError("gradient shapes differ");
  if (c1 < 0.0 || c2 < 0.0 || c1 + c2 > 1.0) throw ConfigError("weight bounds must satisfy c1, c2 >= 0 and c1 + c2 <= 1");
  if (!g_ll.allFinite() || !g_stop.allFinite()) throw NumericalError("non-finite gradient");

  ParetoSolution sol;
  sol.constraints = {c1, c2};
  const double diff2 = (g_ll - g_stop).squaredNorm();
  double a1 = 0.5;
  if (diff2 >= 1e-12) {
    // Stationary point of ||a g_ll + (1-a) g_stop||^2 along the simplex.
    a1 = (g_stop - g_ll).cwiseProduct(g_stop).sum() / diff2;
  }
  a1 = std::clamp(a1, c1, 1.0 - c2);
  // At the upper bound 1 - (1 - c2) can round below c2; keep the bound exact.
  const double a2 = a1 == 1.0 - c2 ? c2 : 1.0 - a1;
  sol.alpha = {a1, a2};
  sol.combined_gradient = a1 * g_ll + a2 * g_stop;
  sol.lambda = 2.0 * sol.combined_gradient.squaredNorm();
  return sol;
}

SaliencyRanking word_saliency(const Eigen::Ref<const Eigen::MatrixXd>& combined_gradient, Span utterance,
                              const std::set<std::size_t>& perturbed) {
  if (utterance.empty()) throw EmptyUtterance("saliency needs a non-empty utterance span");
  if (utterance.end > static_cast<std::size_t>(combined_gradient.rows()))
    throw IndexError("utterance span exceeds the gradient rows");
  SaliencyRanking r;
  r.scores.resize(utterance.size());
  const double cols = static_cast<double>(std::max<Eigen::Index>(1, combined_gradient.cols()));
  for (std::size_t i = 0; i < utterance.size(); ++i) {
    r.scores[i] = combined_gradient.row(static_cast<Eigen::Index>(utterance.begin + i)).cwiseAbs().sum() / cols;
    if (!perturbed.contains(i)) r.order.push_back(i);
  }
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.scores[a] > r.scores[b]; });
  return r;
}

}  // namespace dgslow
