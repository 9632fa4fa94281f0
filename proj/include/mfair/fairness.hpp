#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfair/sensitivity.hpp"

namespace mfair {

struct FairOptions {
  SensitivityOptions sens;
  double floor = 1e-8;           // smallest admissible E[Z^2 | x]
  double max_condition = 1e12;   // above this the multi-marginal system is flagged
  bool keep_draws = false;       // keep the scored sample in the result
};

// Fair decision at one query point. rho* = rho - sum_l eta_l E[Y Z_l | x],
// with eta solving gram * eta = sensitivity.
struct FairRule {
  std::string weight_label;
  std::vector<std::size_t> protected_index;
  Variant variant = Variant::marginal;
  Formula formula = Formula::exact;
  Method method = Method::analytic;
  std::vector<double> x;

  double rho = 0.0;
  double value = 0.0;
  std::vector<double> sensitivity, sensitivity_se;
  Eigen::MatrixXd gram;
  std::vector<double> cross;
  std::vector<double> eta;
  double condition = 1.0;
  bool ill_conditioned = false;
  // Constraint residual of the adjusted rule per attribute and its MC error.
  std::vector<double> residual, residual_se;
  std::optional<ScoredDraws> scored;

  double correction() const { return rho - value; }
  nlohmann::ordered_json to_json() const;
};

// eta = s / denom; DegenerateDenominator when denom <= floor.
double fair_multiplier(double s, double denom, double floor = 1e-8);

// Solves gram * eta = s by LU with partial pivoting. NoFairRule when singular.
Eigen::VectorXd solve_multipliers(const Eigen::MatrixXd& gram, const std::vector<double>& s, double floor,
                                  double* condition = nullptr);

FairRule fair_rule(const SensitivityProblem& problem, const WeightFunction& gamma, std::span<const double> x,
                   const FairOptions& opts, std::size_t attribute = 0);
// All attributes of the problem at once.
FairRule multi_marginal_rule(const SensitivityProblem& problem, const WeightFunction& gamma, std::span<const double> x,
                             const FairOptions& opts);

// Per-draw adjusted weights gamma(U) - sum_l eta_l Z_l. Needs a simulated rule
// built with keep_draws.
std::vector<double> fair_weight(const FairRule& rule);

// The four comparison decisions at one covariate point.
struct Decision {
  std::vector<double> x;
  double unaware = 0.0;       // P_U = E[g(D,x) | X=x]
  double discr_free = 0.0;    // P_DF = E_D[g(D,x)], D from its unconditional law
  double fair_ev = 0.0;       // P_MF with the expected value
  double fair_es = 0.0;       // P_MF with expected shortfall
  double denom = 0.0, sens = 0.0;
  std::string flags;

  double adjustment() const { return unaware - fair_ev; }
};

struct StrategyOptions {
  FairOptions fair;
  double es_level = 0.9;
  std::size_t n_marginal = 100000;  // draws for P_DF when no closed form applies
};

Decision strategies(const SensitivityProblem& problem, std::span<const double> x, const StrategyOptions& opts);

csv::Table decision_table(const std::vector<Decision>& rows, const std::vector<std::string>& x_names);

// Gaussian-linear setting: (D, X) bivariate normal with correlation tau,
// Y = b0 + bx X + bd D + eps.
struct LinearGaussianParams {
  double mu_x = 0.0, mu_d = 3.0, sd_x = 1.0, sd_d = 2.0, tau = 0.5, noise_sd = 0.5;
  double b0 = 1.0, bx = 2.0, bd = 1.0;

  double cond_mean_d(double x) const;
  double cond_var_d() const;
  // slope of E[X | D = t] in t
  double cascade_slope() const;
  // c_x = E[D|x]^2 / E[D^2|x]
  double c(double x) const;
};

// Closed forms on the gaussian-linear setting, written out by hand.
double closed_form_risk(const LinearGaussianParams& p, const WeightFunction& gamma, double x);
double closed_form_sensitivity(const LinearGaussianParams& p, const WeightFunction& gamma, double x, Variant variant);
// (b0 + bx x)(1 - c_x) for the expected value; the general-gamma analogue otherwise.
double closed_form_marginal_fair(const LinearGaussianParams& p, const WeightFunction& gamma, double x);
double cascade_fair_closed_form(const LinearGaussianParams& p, const WeightFunction& gamma, double x);

}  // namespace mfair
