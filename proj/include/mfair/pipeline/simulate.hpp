#pragma once

#include <string>
#include <vector>

#include "mfair/conditional.hpp"
#include "mfair/fairness.hpp"
#include "mfair/pipeline/config.hpp"
#include "mfair/stats.hpp"

namespace mfair::pipeline {

// Bivariate gaussian study: backend, linear model g(d, x) = b0 + bd d + bx x
// and the protected attribute with and without its cascade through X.
struct StudySetup {
  GaussianBackend backend;
  PredictionModel model;
  ProtectedAttribute attribute;  // carries the cascade spec; the marginal variant ignores it
};

StudySetup study_setup(const LinearGaussianParams& p);

// rho(Y) on the rows with keep[j]; `order` sorts y ascending.
double evaluate_subset(const WeightFunction& gamma, std::span<const double> y, const std::vector<std::size_t>& order,
                       const std::vector<bool>& keep);

// Simulated fair decision with a jackknife error over contiguous batches.
Estimate simulated_fair(const ConditionalTerms& terms, const WeightFunction& gamma, std::size_t batches);

struct SimulateOutput {
  std::string hash;
  std::vector<std::string> files;
};

// Writes strategies, adjustment factors, fair rules and sensitivities on the
// grid, analytic and simulated side by side, plus a manifest.
SimulateOutput simulate(const RunConfig& cfg, const std::string& out_dir);

}  // namespace mfair::pipeline
