#pragma once

#include <span>
#include <string>
#include <vector>

namespace mfair {

// Weight function gamma on (0,1), stored as a linear combination of
// constants, upper-tail indicators 1{u >= alpha} and piecewise-linear tables.
class WeightFunction {
 public:
  static WeightFunction expected_value();
  static WeightFunction expected_shortfall(double alpha);
  // Tabulated on a strictly increasing grid in (0,1); linear in between,
  // flat beyond the end points.
  static WeightFunction tabulated(std::vector<double> u, std::vector<double> g,
                                  std::string label = "tabulated");
  // CSV with columns u,gamma.
  static WeightFunction load_csv(const std::string& path);
  // "ev" or "es:<alpha>".
  static WeightFunction parse(const std::string& text);

  double operator()(double u) const;
  // int_a^b gamma(u) du, 0 <= a <= b <= 1.
  double integral(double a, double b) const;
  // int_0^1 gamma(u) Phi^{-1}(u) du
  double normal_moment() const;
  // int_0^1 gamma(u)^2 du
  double square_integral() const;

  WeightFunction operator+(const WeightFunction& o) const;
  WeightFunction operator*(double c) const;
  WeightFunction operator-(const WeightFunction& o) const { return *this + o * -1.0; }

  const std::string& label() const { return label_; }
  bool is_constant() const;

 private:
  struct Term {
    enum Kind { constant, tail, table } kind;
    double coef = 1.0;
    double alpha = 0.0;
    std::vector<double> u, g;
  };
  std::vector<Term> terms_;
  std::string label_;

  static double term_value(const Term& t, double u);
  static double term_integral(const Term& t, double a, double b);
};

// Empirical law with optional probability weights (summing to one).
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::span<const double> values);
  EmpiricalDistribution(std::span<const double> values, std::span<const double> probs);

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted_values() const { return sorted_; }
  // Cumulative probability after each sorted value.
  const std::vector<double>& cumulative() const { return cum_; }
  const std::vector<std::size_t>& order() const { return order_; }
  const std::vector<double>& probs() const { return probs_; }

  double quantile(double u) const;
  double cdf(double y) const;

 private:
  std::vector<double> sorted_;
  std::vector<double> cum_;
  std::vector<double> sorted_probs_;
  std::vector<double> probs_;  // original order
  std::vector<std::size_t> order_;
  bool uniform_ = false;
  void build(std::span<const double> values, std::span<const double> probs);
};

// G(y) = int_{y_(1)}^{y} gamma(F(s)) ds, with gamma(F(s)) read as the cell
// average of gamma over the rank cell of the largest sample value <= s.
// Moving one draw of mass 1/n from y to y' changes the distortion risk by
// (G(y') - G(y))/n up to O(1/n^2).
class RankIntegral {
 public:
  RankIntegral(const WeightFunction& gamma, const EmpiricalDistribution& dist);
  double operator()(double y) const;

 private:
  std::vector<double> knots_;
  std::vector<double> slope_;
  std::vector<double> prefix_;
};

struct RiskDecomposition {
  double total = 0.0;
  double expectation = 0.0;
  double margin = 0.0;
};

// Left-continuous inverse of the (weighted) empirical cdf.
double quantile(const EmpiricalDistribution& dist, double u);
// int F^{-1}(u) gamma(u) du, exact for the step quantile.
double evaluate(const WeightFunction& gamma, const EmpiricalDistribution& dist);
RiskDecomposition decompose(const WeightFunction& gamma, const EmpiricalDistribution& dist);

// Per-draw gamma(U): average of gamma over the cdf interval of the draw's tie
// block. Returned in the original order, so sum_j p_j y_j w_j == evaluate().
std::vector<double> rank_weights(const WeightFunction& gamma, const EmpiricalDistribution& dist);

}  // namespace mfair
