#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfair/conditional.hpp"
#include "mfair/fairness.hpp"
#include "mfair/pipeline/config.hpp"
#include "mfair/pipeline/diagnostics.hpp"
#include "mfair/pipeline/portfolio.hpp"

namespace mfair::pipeline {

// Deterministic shuffle split; returns (train, test) row indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double train_fraction,
                                                                         std::uint64_t seed);

struct AuditModels {
  PredictionModel g;             // step 1: E[Y | D, X]
  DiscreteLaw law;               // unconditional law of D on the training split
  RegressionBackend backend;     // P(D = 1 | X), ES sensitivity regression
  std::optional<ConditionalTail> tail;
  double es_level = 0.9;

  nlohmann::ordered_json to_json() const;
};

struct AuditRow {
  Decision decision;
  double es = 0.0;          // rho_ES(Y | x)
  double sens_es = 0.0;
  std::string age_group;
};

struct StrategyStats {
  std::string name;
  Summary summary;
  double gini = 0.0;
  QuantileBins bins;
};

struct AuditReport {
  AuditModels models;
  std::vector<AuditRow> rows;  // test split
  std::vector<double> exposure, loss, observed;
  std::vector<StrategyStats> strategies;
  Summary adjustment_ev, adjustment_es;
  std::size_t degenerate_rows = 0;
  double positive_share = 0.0;  // share of rows with P_U - P_MF_EV > 0
  std::vector<std::pair<std::string, Summary>> age_sensitivity_ev, age_sensitivity_es;
  std::optional<nlohmann::ordered_json> recovery;  // fitted vs generator coefficients

  nlohmann::ordered_json to_json() const;
};

// Fits the step-1 and step-2 models on the training rows and evaluates the
// four strategies on the test rows. `truth` is required when cfg.audit.step1
// is "truth".
AuditReport audit(const RunConfig& cfg, const EncodedData& data, const std::optional<PortfolioTruth>& truth = {});

// Strategy statistics from decision columns.
std::vector<StrategyStats> strategy_stats(const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                                          const std::vector<double>& observed, const std::vector<double>& loss,
                                          const std::vector<double>& exposure, std::size_t n_bins);

// Coefficient recovery of a fitted model against known truth: relative L2
// error without the intercept and the largest absolute error.
nlohmann::ordered_json coefficient_recovery(const std::vector<double>& fitted, const std::vector<double>& truth,
                                            const std::vector<std::string>& names);

}  // namespace mfair::pipeline
