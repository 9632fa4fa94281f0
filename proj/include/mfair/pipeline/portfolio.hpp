#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfair/csv.hpp"
#include "mfair/pipeline/config.hpp"
#include "mfair/predictors.hpp"

namespace mfair::pipeline {

// Motor third-party liability schema. Gender is the protected attribute.
const std::vector<std::string>& portfolio_columns();

// Age bins the generator's coefficients refer to.
const std::vector<int>& generator_age_bins();

// Encoded design. Column 0 is D = 1{Female}; then one-hot Type (ref A),
// Category (ref Large), Occupation (ref Employed), age group (ref first bin),
// Group2 (ref L), and the numeric columns
//   (Group1 - 10)/10, (Poldur - 7)/10, log(Value/15000), Adind, (log Density - 4)/2.
struct EncodedData {
  Eigen::MatrixXd Z;     // n x (1 + p)
  Eigen::VectorXd y;     // pure premium Indtppd / exposure
  Eigen::VectorXd w;     // exposure Exppdays / 365
  Eigen::VectorXd loss;  // Indtppd
  std::vector<std::string> age_group;
  FeatureLayout layout;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  Eigen::MatrixXd covariates() const { return Z.rightCols(Z.cols() - 1); }
  Eigen::VectorXd protected_column() const { return Z.col(0); }
  Dataset dataset() const;  // full design with D
  Dataset unaware_dataset() const;  // covariates only
  EncodedData rows(const std::vector<std::size_t>& idx) const;
};

std::vector<std::string> encoded_names(const std::vector<int>& age_bins);
EncodedData encode(const csv::Table& table, const std::vector<int>& age_bins);

// True log pure-premium coefficients on the encoded design (intercept first)
// and the severity law.
struct PortfolioTruth {
  std::vector<std::string> names;
  std::vector<double> coef;
  double base_frequency = 0.0, severity_mean = 0.0, severity_shape = 0.0;

  PredictionModel model(double power = 1.5) const;  // tweedie/log with the true coefficients
  nlohmann::ordered_json to_json() const;
  static PortfolioTruth from_json(const nlohmann::json& j);
};

PortfolioTruth portfolio_truth(const PortfolioConfig& cfg);

struct GeneratedPortfolio {
  csv::Table table;
  PortfolioTruth truth;
};

// Compound Poisson-gamma generator. Claim counts are Poisson with mean
// exposure * base_frequency * exp(x'b); claim sizes are gamma with the
// configured mean and shape. Gender depends on occupation and age.
GeneratedPortfolio generate_portfolio(const PortfolioConfig& cfg, std::uint64_t seed);

}  // namespace mfair::pipeline
