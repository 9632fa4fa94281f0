#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mfair {

enum class Family { gaussian, poisson, gamma, tweedie, binomial, custom };
enum class Link { identity, log, logit };
enum class Optimizer { irls, adam };

std::string to_string(Family f);
std::string to_string(Link l);
Family family_from_string(const std::string& s);
Link link_from_string(const std::string& s);

// Column layout of the encoded design: protected columns first.
struct FeatureLayout {
  std::vector<std::string> names;
  std::size_t n_protected = 0;
  std::vector<bool> one_hot;                // per column
  std::vector<std::vector<double>> levels;  // declared levels per protected column, may be empty

  static FeatureLayout plain(std::size_t n_protected, std::size_t n_other);
  std::size_t size() const { return names.size(); }
  void validate() const;
};

struct FitDiagnostics {
  std::string optimizer;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  double deviance = 0.0;
  bool converged = false;
};

struct DerivativeResult {
  double value = 0.0;
  bool numeric = false;
};

class PredictionModel {
 public:
  using Callable = std::function<double(std::span<const double> d, std::span<const double> x)>;

  PredictionModel() = default;
  // coef[0] is the intercept, then one per layout column.
  static PredictionModel linear(std::vector<double> coef, FeatureLayout layout);
  static PredictionModel glm(Family family, Link link, double power, std::vector<double> coef, FeatureLayout layout);
  static PredictionModel custom(Callable f, FeatureLayout layout);

  double predict(std::span<const double> d, std::span<const double> x) const;
  // z = encoded row, protected columns first.
  double predict_row(std::span<const double> z) const;
  Eigen::VectorXd predict_matrix(const Eigen::MatrixXd& Z) const;
  double linear_predictor(std::span<const double> z) const;

  // d g / d d_i at (d, x).
  DerivativeResult partial(std::size_t i, std::span<const double> d, std::span<const double> x) const;
  // Derivative in joint coordinate j (protected first, then the others).
  DerivativeResult partial_joint(std::size_t j, std::span<const double> d, std::span<const double> x) const;
  // g(d with d_i = from, x) - g(d with d_i = to, x)
  double delta(std::size_t i, double from, double to, std::span<const double> d, std::span<const double> x) const;

  Family family() const { return family_; }
  Link link() const { return link_; }
  double power() const { return power_; }
  const std::vector<double>& coefficients() const { return coef_; }
  const FeatureLayout& layout() const { return layout_; }
  std::size_t n_protected() const { return layout_.n_protected; }
  std::size_t n_other() const { return layout_.size() - layout_.n_protected; }

  FitDiagnostics diagnostics;

  nlohmann::ordered_json to_json() const;
  static PredictionModel from_json(const nlohmann::json& j);

 private:
  Family family_ = Family::gaussian;
  Link link_ = Link::identity;
  double power_ = 1.5;
  std::vector<double> coef_;
  FeatureLayout layout_;
  Callable custom_;
  double inverse_link(double eta) const;
};

struct Dataset {
  Eigen::MatrixXd Z;  // encoded design without intercept
  Eigen::VectorXd y;
  Eigen::VectorXd w;  // observation weights (exposure); empty means ones
  FeatureLayout layout;
  void validate() const;
};

struct FitOptions {
  std::optional<Optimizer> optimizer;  // default: irls, adam for tweedie
  std::size_t max_iter = 0;            // 0: optimizer default
  double tol = 0.0;                    // 0: optimizer default
  double learning_rate = 0.01;
  double ridge = 0.0;
};

// Mean weighted unit deviance.
double mean_deviance(Family family, double power, const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                     const Eigen::VectorXd& w);

PredictionModel fit_glm(const Dataset& data, Family family, Link link, double power = 1.5, FitOptions opts = {});

// Linear quantile regression by pinball-loss descent (Adam, fixed learning rate).
struct QuantileFitOptions {
  std::size_t iterations = 5000;
  double learning_rate = 0.01;
};
PredictionModel fit_quantile(const Dataset& data, double level, QuantileFitOptions opts = {});

}  // namespace mfair
