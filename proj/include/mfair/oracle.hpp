#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfair/conditional.hpp"
#include "mfair/distortion.hpp"
#include "mfair/fairness.hpp"
#include "mfair/predictors.hpp"
#include "mfair/sensitivity.hpp"
#include "mfair/stats.hpp"

namespace mfair {

struct FdOptions {
  double delta = 1e-3;
  std::size_t n_draws = 100000;
  std::uint64_t seed = 1;
  std::size_t batches = 20;
};

struct FdResult {
  double estimate = 0.0;
  double se = 0.0;
  double rho_plus = 0.0, rho_minus = 0.0;
};

// Outcomes of the draws after perturbing attribute `attr` by delta. The
// noise and all auxiliary uniforms are reused, so delta = 0 gives back the
// unperturbed outcomes.
std::vector<double> perturbed_outcomes(const PredictionModel& model, const ProtectedAttribute& attr, Variant variant,
                                       std::span<const double> x, const ConditionalSample& draws, double delta);

// Central difference (rho(Y_+) - rho(Y_-)) / (2 delta) on given outcomes with a
// jackknife error over contiguous batches. `frozen` holds optional per-draw
// weights a_j; the statistic then uses rho(Y) - mean(Y a).
FdResult central_difference(std::span<const double> y_plus, std::span<const double> y_minus,
                            const WeightFunction& gamma, double delta, std::size_t batches,
                            std::span<const double> frozen = {});

// Draws D | X = x from the sampler and differentiates by central differences.
FdResult fd_sensitivity(const PredictionModel& model, const ConditionalSampler& sampler, const ProtectedAttribute& attr,
                        Variant variant, const WeightFunction& gamma, std::span<const double> x,
                        const FdOptions& opts, std::span<const double> frozen = {});

// Y = 1{X1=0} D + 1{X1=1} X2 with P(X1=1) = p, D ~ U(0, c), X2 ~ U(x2_lo, x2_hi)
// (a point mass when x2_lo == x2_hi). Requires c <= x2_lo.
// Oracle sensitivity of an adjusted rule rho - sum_l eta_l E[Y Z_l | x]: the
// adjustment weights eta' Z are frozen per draw on a fresh sample (opts.seed)
// and the perturbation moves Y only. One result per attribute of `problem`;
// combined_se adds the rule's own constraint error.
struct FairRuleCheck {
  std::vector<FdResult> fd;
  std::vector<double> combined_se;
};

FairRuleCheck fair_rule_oracle(const SensitivityProblem& problem, const FairRule& rule, const WeightFunction& gamma,
                               const FdOptions& opts);

struct Example32 {
  double p = 0.5;
  double c = 0.5;
  double x2_lo = 2.0, x2_hi = 2.0;
};

double example32_quantile(const Example32& e, double u);

struct Example32Result {
  Estimate plugin;
  FdResult oracle;
};

// Unconditional sensitivity of rho_gamma(Y) to D (1 + delta).
Example32Result example32_check(const Example32& e, const WeightFunction& gamma, std::size_t n, std::uint64_t seed,
                                double delta = 1e-3);

// Mortgage cascade: D ~ Bern(p), X | D = k ~ LogN((k+1) mu, sigma^2). After
// the Bernoulli perturbation X is a two-component lognormal mixture with
// weight p_delta on the second component.
struct Example51 {
  double p = 0.2;
  double mu = 1.0, sigma = 0.5;
};

double example51_cdf(const Example51& e, double x, double delta);
// X draws pushed through the discrete perturbation and the cascade factor.
std::vector<double> example51_sample(const Example51& e, double delta, std::size_t n, std::uint64_t seed);

// sup_x |F_n(x) - F(x)| over the sample points, both one-sided limits.
double kolmogorov_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

struct DevianceOracleResult {
  double deviance = 0.0;
  std::vector<double> coef;  // intercept first, original scale
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

// Plain L-BFGS with backtracking on the mean deviance. Independent of fit_glm.
DevianceOracleResult deviance_oracle(const Dataset& data, Family family, Link link, double power = 1.5,
                                     std::size_t max_iter = 20000, double tol = 1e-10);

}  // namespace mfair
