#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dgslow/victim.hpp"

namespace dgslow {

struct ObjectiveValues {
  double tc = 0.0;      // sum of reference-token probabilities
  std::size_t gl = 0;   // generated length, EOS excluded
  double l_ll = 0.0;    // sum of log-probabilities of the reference
  double l_eos = 0.0;
  double l_reg = 0.0;
  double l_stop = 0.0;  // l_eos + beta * l_reg
};

// Targeted confidence: the plain sum of per-token probabilities.
double compute_tc(std::span<const double> token_probs);
inline double compute_tc(const ReferenceScore& score) { return compute_tc(score.token_probs); }

inline constexpr double kProbabilityFloor = 1e-12;

struct LogLikelihood {
  double value = 0.0;
  bool clamped = false;  // some probability was below kProbabilityFloor
};

LogLikelihood loss_ll(std::span<const double> token_probs);
inline LogLikelihood loss_ll(const ReferenceScore& score) { return loss_ll(score.token_probs); }

// sum_t (l_t[eos] - sum_tok p_t(tok) l_t[tok]). Uses the full logit rows when
// present, otherwise the per-step statistics. Throws ContractError when the
// result carries neither.
double loss_eos(const GenerationResult& gen, std::size_t eos_token_id);

// max(0, eps - rho)
double loss_reg(double rho, double eps);

double loss_stop(double l_eos, double l_reg, double beta);

ObjectiveValues evaluate_objectives(const GenerationResult& gen, const ReferenceScore& score, std::size_t eos_token_id,
                                    double rho, double eps, double beta);

struct ParetoSolution {
  std::array<double, 2> alpha{0.5, 0.5};
  double lambda = 0.0;  // diagnostic only
  Eigen::MatrixXd combined_gradient;
  std::array<double, 2> constraints{0.0, 0.0};
};

// Minimum-norm convex combination of two gradients:
//   min ||a1 g_ll + a2 g_stop||^2  s.t.  a1 + a2 = 1, a1 >= c1, a2 >= c2.
// Matrices are treated as flat vectors over all coordinates.
ParetoSolution solve_pareto(const Eigen::Ref<const Eigen::MatrixXd>& g_ll,
                            const Eigen::Ref<const Eigen::MatrixXd>& g_stop, double c1 = 0.0, double c2 = 0.0);

struct SaliencyRanking {
  std::vector<double> scores;       // one per utterance position
  std::vector<std::size_t> order;   // unperturbed positions, highest score first
};

// score(i) = mean_j |g[utterance.begin + i, j]|. Positions are relative to the
// utterance. Ties keep the leftmost position first.
SaliencyRanking word_saliency(const Eigen::Ref<const Eigen::MatrixXd>& combined_gradient, Span utterance,
                              const std::set<std::size_t>& perturbed);

}  // namespace dgslow
