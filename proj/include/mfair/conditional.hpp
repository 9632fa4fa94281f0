#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mfair/perturbation.hpp"
#include "mfair/predictors.hpp"

namespace mfair {

// Draws of the protected block and the additive noise given X = x.
struct ConditionalSample {
  Eigen::MatrixXd d;      // n x m
  Eigen::VectorXd noise;  // n
  Eigen::MatrixXd v;      // n x m auxiliary uniforms for discrete levels
  std::size_t size() const { return static_cast<std::size_t>(d.rows()); }
};

class ConditionalSampler {
 public:
  virtual ~ConditionalSampler() = default;
  virtual std::size_t n_protected() const = 0;
  virtual std::size_t n_other() const = 0;
  virtual ConditionalSample draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const = 0;
  // Draws from the unconditional law of the protected block.
  virtual ConditionalSample draw_marginal(std::size_t n, std::uint64_t seed) const = 0;
  // P(D_i = level k | X = x); InvalidInput when D_i is not discrete.
  virtual double class_prob(std::size_t i, std::size_t k, std::span<const double> x) const;

  // Draw in mirrored pairs (z, -z) and (v, 1 - v).
  bool antithetic = true;
};

// Jointly gaussian (D, X) with independent gaussian noise.
class GaussianBackend : public ConditionalSampler {
 public:
  GaussianBackend(Eigen::VectorXd mean, Eigen::MatrixXd cov, std::size_t n_protected, double noise_sd);
  // One protected attribute, one covariate, corr(D, X) = tau.
  static GaussianBackend bivariate(double mu_x, double mu_d, double sd_x, double sd_d, double tau, double noise_sd);

  std::size_t n_protected() const override { return m_; }
  std::size_t n_other() const override { return static_cast<std::size_t>(mean_.size()) - m_; }
  ConditionalSample draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const override;
  ConditionalSample draw_marginal(std::size_t n, std::uint64_t seed) const override;

  Eigen::VectorXd cond_mean(std::span<const double> x) const;
  const Eigen::MatrixXd& cond_cov() const { return cond_cov_; }
  double cond_mean_D(std::size_t i, std::span<const double> x) const;
  double cond_second_moment_D(std::size_t i, std::span<const double> x) const;
  Eigen::VectorXd marginal_mean() const { return mean_.head(m_); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  double noise_sd() const { return noise_sd_; }

  // Moments of Y = g(D, x) + eps for an identity-link model.
  struct LinearMoments {
    double mean_y = 0.0, var_y = 0.0;
    Eigen::VectorXd mean_d, cov_dy;
    Eigen::MatrixXd cov_d;
  };
  LinearMoments linear_moments(const PredictionModel& model, std::span<const double> x) const;
  LinearMoments marginal_linear_moments(const PredictionModel& model, std::span<const double> x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  std::size_t m_;
  double noise_sd_;
  Eigen::MatrixXd gain_;  // Sigma_DX Sigma_XX^{-1}
  Eigen::MatrixXd cond_cov_, cond_chol_, marg_chol_;
};

// One protected attribute with a compact or discrete marginal, tied to the
// first covariate X_1 ~ N(mu_x, sd_x^2) by a gaussian copula with correlation rho.
class CopulaSampler : public ConditionalSampler {
 public:
  CopulaSampler(ProtectedSpec spec, double rho, double mu_x, double sd_x, std::size_t n_other, double noise_sd);
  std::size_t n_protected() const override { return 1; }
  std::size_t n_other() const override { return p_; }
  ConditionalSample draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const override;
  ConditionalSample draw_marginal(std::size_t n, std::uint64_t seed) const override;
  double class_prob(std::size_t i, std::size_t k, std::span<const double> x) const override;
  const ProtectedSpec& spec() const { return spec_; }

 private:
  ProtectedSpec spec_;
  double rho_, mu_x_, sd_x_;
  std::size_t p_;
  double noise_sd_;
  ConditionalSample draw_latent(double centre, double spread, std::size_t n, std::uint64_t seed) const;
};

// Discrete protected attribute D, covariates drawn from X_j | D = t factors.
class MixtureSampler : public ConditionalSampler {
 public:
  MixtureSampler(DiscreteLaw law, std::vector<CascadeFactor> x_given_d, double noise_sd);
  std::size_t n_protected() const override { return 1; }
  std::size_t n_other() const override { return factors_.size(); }
  ConditionalSample draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const override;
  ConditionalSample draw_marginal(std::size_t n, std::uint64_t seed) const override;
  double class_prob(std::size_t i, std::size_t k, std::span<const double> x) const override;

 private:
  DiscreteLaw law_;
  std::vector<CascadeFactor> factors_;
  double noise_sd_;
  ConditionalSample draw_probs(const std::vector<double>& probs, std::size_t n, std::uint64_t seed) const;
};

class CallableSampler : public ConditionalSampler {
 public:
  using DrawFn = std::function<ConditionalSample(std::span<const double> x, std::size_t n, std::uint64_t seed)>;
  CallableSampler(std::size_t m, std::size_t p, DrawFn conditional, DrawFn marginal = {});
  std::size_t n_protected() const override { return m_; }
  std::size_t n_other() const override { return p_; }
  ConditionalSample draw(std::span<const double> x, std::size_t n, std::uint64_t seed) const override;
  ConditionalSample draw_marginal(std::size_t n, std::uint64_t seed) const override;

 private:
  std::size_t m_, p_;
  DrawFn cond_, marg_;
};

// Maps raw covariates to regressor features.
struct FeatureMap {
  std::function<std::vector<double>(std::span<const double>)> apply;
  std::vector<std::string> names;
  std::string kind = "identity";
  int degree = 1;

  static FeatureMap identity(std::vector<std::string> names);
  // Powers 1..degree of every covariate.
  static FeatureMap polynomial(std::vector<std::string> names, int degree);
  Eigen::MatrixXd design(const Eigen::MatrixXd& X) const;
};

struct RegressorSpec {
  Family family = Family::gaussian;
  Link link = Link::identity;
  double power = 1.5;
  FitOptions fit;
};

// Conditional quantities as regressions on the covariates.
class RegressionBackend {
 public:
  explicit RegressionBackend(FeatureMap map);

  const FeatureMap& features() const { return map_; }
  void set(const std::string& quantity, PredictionModel model, double sign = 1.0);
  bool has(const std::string& quantity) const { return models_.count(quantity) > 0; }
  const PredictionModel& model(const std::string& quantity) const;
  double predict(const std::string& quantity, std::span<const double> x) const;
  Eigen::VectorXd predict_all(const std::string& quantity, const Eigen::MatrixXd& X) const;
  // True when the quantity was fitted on |target| with a reattached sign.
  bool sign_approximated(const std::string& quantity) const;

  // Fit a regression of `target` on the features of X. Families restricted to
  // non-negative responses are fitted on |target| and the dominant sign is kept.
  void fit(const std::string& quantity, const Eigen::MatrixXd& X, const Eigen::VectorXd& target,
           const Eigen::VectorXd& weights, const RegressorSpec& spec);
  void fit_class_probs(std::size_t i, const Eigen::MatrixXd& X, const Eigen::VectorXd& d, const DiscreteLaw& law,
                       const Eigen::VectorXd& weights, FitOptions opts = {});

  double cond_mean_D(std::size_t i, std::span<const double> x) const;
  double cond_second_moment_D(std::size_t i, std::span<const double> x) const;
  double cond_class_prob(std::size_t i, std::size_t k, std::span<const double> x) const;

  nlohmann::ordered_json to_json() const;
  void load_models(const nlohmann::json& j);

  static std::string mean_key(std::size_t i) { return "mean_D" + std::to_string(i); }
  static std::string second_moment_key(std::size_t i) { return "second_moment_D" + std::to_string(i); }
  static std::string class_key(std::size_t i, std::size_t k) {
    return "class_D" + std::to_string(i) + "_" + std::to_string(k);
  }

 private:
  FeatureMap map_;
  std::map<std::string, PredictionModel> models_;
  std::map<std::string, double> sign_;
  std::map<std::string, bool> approx_;
  std::map<std::size_t, std::size_t> n_levels_;
};

struct TailOptions {
  RegressorSpec tail{Family::tweedie, Link::log, 1.5, {}};
  QuantileFitOptions quantile;
  std::size_t min_exceedances = 50;
};

// VaR by linear quantile regression, ES by a regression fitted on exceedances.
class ConditionalTail {
 public:
  static ConditionalTail fit(const FeatureMap& map, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& weights, double alpha, TailOptions opts = {});
  double cond_var(std::span<const double> x) const;
  double cond_es(std::span<const double> x) const;
  double alpha() const { return alpha_; }
  std::size_t exceedances() const { return n_exceed_; }
  const PredictionModel& quantile_model() const { return var_; }
  const PredictionModel& tail_model() const { return tail_; }

 private:
  FeatureMap map_;
  PredictionModel var_, tail_;
  double alpha_ = 0.0;
  bool has_var_ = false;
  std::size_t n_exceed_ = 0;
};

}  // namespace mfair
