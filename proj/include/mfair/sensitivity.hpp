#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfair/conditional.hpp"
#include "mfair/csv.hpp"
#include "mfair/distortion.hpp"
#include "mfair/perturbation.hpp"
#include "mfair/predictors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

enum class Variant { marginal, cascade };
// exact: derivative of the stated perturbation. published: the closed forms
// as printed in the literature for compact and discrete attributes.
enum class Formula { exact, published };
enum class Route { automatic, analytic, simulation };
enum class Method { analytic, simulation, regression };

std::string to_string(Variant v);
std::string to_string(Formula f);
std::string to_string(Method m);
Variant variant_from_string(const std::string& s);
Formula formula_from_string(const std::string& s);

struct ProtectedAttribute {
  std::size_t index = 0;
  ProtectedSpec spec;
  std::optional<CascadeSpec> cascade;
};

struct SimulationOptions {
  std::size_t n_draws = 100000;
  std::uint64_t seed = 1;
  std::size_t min_draws = 1000;
};

struct SensitivityOptions {
  Route route = Route::automatic;
  Variant variant = Variant::marginal;
  Formula formula = Formula::exact;
  SimulationOptions sim;
};

struct SensitivityProblem {
  const PredictionModel* model = nullptr;
  const ConditionalSampler* sampler = nullptr;
  std::vector<ProtectedAttribute> attributes;

  void validate(Variant variant) const;
};

// Per-draw quantities at X = x on one conditional sample.
struct ScoredDraws {
  ConditionalSample draws;
  std::vector<double> y;
  std::vector<double> weight;                     // gamma(U) cell averages
  std::vector<std::vector<double>> score;         // Z per attribute
  std::vector<std::vector<double>> contribution;  // sensitivity integrand per attribute
};

// Conditional moments behind sensitivities and fair rules.
struct ConditionalTerms {
  Method method = Method::analytic;
  double rho = 0.0;
  std::vector<double> sensitivity, sensitivity_se;
  Eigen::MatrixXd gram;       // E[Z_l Z_l' | x]
  std::vector<double> cross;  // E[Y Z_l | x]
  std::optional<ScoredDraws> scored;
};

ConditionalTerms conditional_terms(const SensitivityProblem& problem, const WeightFunction& gamma,
                                   std::span<const double> x, const SensitivityOptions& opts);

// Score of one attribute on given draws; y must be the outcomes of those draws.
void score_draws(const PredictionModel& model, const ProtectedAttribute& attr, const WeightFunction& gamma,
                 std::span<const double> x, Variant variant, Formula formula, ScoredDraws& out);

struct SensitivityValue {
  double value = 0.0;
  double se = 0.0;
  Method method = Method::analytic;
};

SensitivityValue sensitivity_at(const SensitivityProblem& problem, const WeightFunction& gamma,
                                std::span<const double> x, const SensitivityOptions& opts, std::size_t attribute = 0);

struct SensitivityReport {
  std::string kind;
  std::size_t protected_index = 0;
  std::string weight_label;
  Variant variant = Variant::marginal;
  Formula formula = Formula::exact;
  std::vector<std::vector<double>> x;
  std::vector<SensitivityValue> values;
  std::size_t n_draws = 0;
  std::uint64_t seed = 0;

  csv::Table to_table() const;
  nlohmann::ordered_json to_json() const;
};

// Grid evaluation; point k uses seed derive_seed(opts.sim.seed, k).
SensitivityReport sensitivity_report(const SensitivityProblem& problem, const WeightFunction& gamma,
                                     const std::vector<std::vector<double>>& xs, const SensitivityOptions& opts,
                                     std::size_t attribute = 0);

// Mean sensitivity for D ~ Bernoulli(p) independent of X, levels (0,1), with a
// level difference delta_g = g(0) - g(1) that does not depend on D.
// published: v (1-p) delta_g; exact: v delta_g; v = -q phi(q), q = Phi^{-1}(1-p).
double bernoulli_sensitivity(double p, double delta_g, Formula formula);

// Name of the formula used, e.g. "marginal_continuous", "cascade_discrete".
std::string sensitivity_kind(const ProtectedAttribute& attr, Variant variant, const WeightFunction& gamma);

// Plug-in sensitivity of an unconditional sample with the continuous
// perturbation: mean(d * dg * gamma(U_Y)). Used by the conditional-tail example.
Estimate plugin_sensitivity(std::span<const double> y, std::span<const double> d_dg, const WeightFunction& gamma);

}  // namespace mfair
