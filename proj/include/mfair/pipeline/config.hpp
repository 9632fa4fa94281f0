#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfair/fairness.hpp"

namespace mfair::pipeline {

struct Grid {
  double from = -3.0, to = 3.0, step = 0.1;
  std::vector<double> points() const;
};

struct SimulateConfig {
  LinearGaussianParams params;
  Grid grid;
  std::size_t n_draws = 100000;
  std::size_t n_marginal = 100000;
  double es_level = 0.95;
  std::size_t batches = 20;
};

// Synthetic portfolio generator settings. Coefficients are on the log
// pure-premium scale; see portfolio.hpp for the encoded design.
struct PortfolioConfig {
  std::size_t n = 100000;
  double gender_coef = -0.25;
  // claims per policy-year at the reference cell; high for motor TPL so that
  // n = 1e5 pins the coefficients down to a few percent
  double base_frequency = 1.5;
  double severity_mean = 1500.0;
  double severity_shape = 3.0;
  double female_share = 0.3;
};

struct AuditConfig {
  std::string input;  // empty: generate from the portfolio settings
  double train_fraction = 0.7;
  std::uint64_t split_seed = 7;
  double es_level = 0.9;
  std::vector<int> age_bins{18, 28, 38, 48, 58, 68};
  std::size_t n_bins = 10;
  double tweedie_power = 1.5;
  std::string optimizer = "adam";  // step-1 and unaware fits
  // "fit": estimate g from the training split; "truth": use the generator's
  // coefficients (only for synthetic data).
  std::string step1 = "fit";
};

struct SensitivityConfig {
  std::string rho = "ev";
  std::string kind = "continuous";  // continuous | compact | discrete
  std::vector<double> levels, probs;  // discrete law
  double beta_a = 2.0, beta_b = 5.0;  // compact law on [0,1]
  double copula_rho = 0.5;            // compact/discrete dependence on X
  LinearGaussianParams params;
  Grid grid{-2.0, 2.0, 1.0};
  std::size_t n_draws = 100000;
  std::string route = "automatic";
};

struct ReportConfig {
  std::string input;  // decisions CSV written by audit
  std::size_t n_bins = 10;
};

struct RunConfig {
  int version = 1;
  std::uint64_t seed = 1;
  Variant variant = Variant::marginal;
  Formula formula = Formula::exact;
  SimulateConfig simulate;
  PortfolioConfig portfolio;
  AuditConfig audit;
  SensitivityConfig sensitivity;
  ReportConfig report;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;
  void validate() const;
  // First 8 hex digits of a 64-bit FNV-1a hash of the canonical JSON.
  std::string hash() const;
};

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
void ensure_dir(const std::string& dir);

}  // namespace mfair::pipeline
