#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfair/errors.hpp"
#include "mfair/fairness.hpp"
#include "mfair/pipeline/simulate.hpp"
#include "mfair/stats.hpp"

using namespace mfair;

namespace {

FairOptions analytic() {
  FairOptions f;
  f.sens.route = Route::analytic;
  return f;
}

FairOptions simulated(std::size_t n, std::uint64_t seed) {
  FairOptions f;
  f.sens.route = Route::simulation;
  f.sens.sim.n_draws = n;
  f.sens.sim.seed = seed;
  f.keep_draws = true;
  return f;
}

}  // namespace

TEST_CASE("fair rule on the gaussian study") {
  LinearGaussianParams p;
  CHECK(p.c(0.0) == doctest::Approx(0.75));
  CHECK(p.cascade_slope() == doctest::Approx(0.25));
  auto s = pipeline::study_setup(p);
  SensitivityProblem prob{&s.model, &s.backend, {s.attribute}};
  std::vector<double> x0{0.0};
  auto ev = WeightFunction::expected_value();
  auto r = fair_rule(prob, ev, x0, analytic());
  CHECK(r.value == doctest::Approx(0.25));
  CHECK(r.rho == doctest::Approx(4.0));
  CHECK(closed_form_marginal_fair(p, ev, 0.0) == doctest::Approx(0.25));

  auto o = analytic();
  o.sens.variant = Variant::cascade;
  CHECK(fair_rule(prob, ev, x0, o).value == doctest::Approx(0.25));
  CHECK(cascade_fair_closed_form(p, ev, 0.0) == doctest::Approx(0.25));

  // E[D|x] = 3 + x vanishes at x = -3 and so does the correction
  std::vector<double> xm{-3.0};
  auto z = fair_rule(prob, ev, xm, analytic());
  CHECK(z.correction() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cascade_fair_closed_form(p, ev, -3.0) == doctest::Approx(p.b0 + p.bx * -3.0));
}

TEST_CASE("fair multiplier edge cases") {
  CHECK(fair_multiplier(0.0, 2.0) == 0.0);
  CHECK(fair_multiplier(3.0, 2.0) == doctest::Approx(1.5));
  CHECK_THROWS_AS(fair_multiplier(1.0, 1e-9), DegenerateDenominator);
  CHECK_THROWS_AS(fair_multiplier(1.0, 0.0), DegenerateDenominator);

  LinearGaussianParams p;
  p.bd = 0.0;
  auto s = pipeline::study_setup(p);
  SensitivityProblem prob{&s.model, &s.backend, {s.attribute}};
  std::vector<double> x{1.0};
  CHECK_THROWS_AS(fair_rule(prob, WeightFunction::expected_value(), x, analytic()), DegenerateDenominator);
}

TEST_CASE("multiplier system") {
  Eigen::MatrixXd sing(2, 2);
  sing << 1, 1, 1, 1;
  CHECK_THROWS_AS(solve_multipliers(sing, {1.0, 1.0}, 1e-8), NoFairRule);
  Eigen::MatrixXd near(2, 2);
  near << 1, 1, 1, 1 + 1e-13;
  double cond = 0.0;
  solve_multipliers(near, {1.0, 1.0}, 1e-8, &cond);
  CHECK(cond > 1e12);
  Eigen::MatrixXd g(2, 2);
  g << 2, 0, 0, 4;
  auto eta = solve_multipliers(g, {1.0, 2.0}, 1e-8, &cond);
  CHECK(eta(0) == doctest::Approx(0.5));
  CHECK(eta(1) == doctest::Approx(0.5));
  CHECK(cond == doctest::Approx(2.0));
}

TEST_CASE("fair weight reconstructs the rule and kills the sensitivity") {
  auto s = pipeline::study_setup({});
  SensitivityProblem prob{&s.model, &s.backend, {s.attribute}};
  std::vector<double> x{0.5};
  auto r = fair_rule(prob, WeightFunction::expected_value(), x, simulated(20000, 3));
  REQUIRE(r.scored.has_value());
  auto w = fair_weight(r);
  const auto& sc = *r.scored;
  KahanSum yw, zw;
  for (std::size_t j = 0; j < w.size(); ++j) {
    yw.add(sc.y[j] * w[j]);
    zw.add(sc.score[0][j] * w[j]);
  }
  double n = static_cast<double>(w.size());
  CHECK(yw.value() / n == doctest::Approx(r.value).epsilon(1e-10));
  CHECK(std::abs(zw.value() / n) < 1e-9);

  // with gamma = 1 the weights are 1 - (mean D / mean D^2) D on the draws
  KahanSum d1, d2;
  for (std::size_t j = 0; j < w.size(); ++j) {
    d1.add(sc.draws.d(j, 0));
    d2.add(sc.draws.d(j, 0) * sc.draws.d(j, 0));
  }
  double eta = d1.value() / d2.value();
  CHECK(w[7] == doctest::Approx(1.0 - eta * sc.draws.d(7, 0)).epsilon(1e-10));
}

TEST_CASE("property: the fair weight is the closest feasible weight") {
  auto s = pipeline::study_setup({});
  SensitivityProblem prob{&s.model, &s.backend, {s.attribute}};
  std::vector<double> x{-0.4};
  auto r = fair_rule(prob, WeightFunction::expected_shortfall(0.9), x, simulated(5000, 8));
  auto w = fair_weight(r);
  const auto& sc = *r.scored;
  const auto& z = sc.score[0];
  std::size_t n = w.size();
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    KahanSum s;
    for (std::size_t j = 0; j < n; ++j) s.add(a[j] * b[j]);
    return s.value() / static_cast<double>(n);
  };
  auto dist = [&](const std::vector<double>& v) {
    KahanSum s;
    for (std::size_t j = 0; j < n; ++j) s.add((sc.weight[j] - v[j]) * (sc.weight[j] - v[j]));
    return s.value();
  };
  double base = dist(w);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> e(n);
    for (auto& v : e) v = std_normal(rng);
    double k = dot(e, z) / dot(z, z);
    for (std::size_t j = 0; j < n; ++j) e[j] -= k * z[j];  // feasible direction
    std::vector<double> moved(n);
    for (std::size_t j = 0; j < n; ++j) moved[j] = w[j] + 0.01 * e[j];
    CHECK(dist(moved) >= base);
  }
}

TEST_CASE("multi-marginal rule") {
  // D1 tied to X, D2 independent with mean zero: the gram matrix is diagonal
  Eigen::VectorXd mean(3);
  mean << 3.0, 0.0, 0.0;
  Eigen::MatrixXd cov(3, 3);
  cov << 4.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0;
  GaussianBackend b(mean, cov, 2, 0.5);
  auto layout = FeatureLayout::plain(2, 1);
  auto model = PredictionModel::linear({1.0, 1.0, -0.5, 2.0}, layout);
  ProtectedAttribute a0, a1;
  a1.index = 1;
  SensitivityProblem both{&model, &b, {a0, a1}};
  std::vector<double> x{0.8};
  auto ev = WeightFunction::expected_value();
  auto multi = multi_marginal_rule(both, ev, x, analytic());
  auto r0 = fair_rule(both, ev, x, analytic(), 0);
  auto r1 = fair_rule(both, ev, x, analytic(), 1);
  CHECK(multi.gram(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(multi.eta[0] == doctest::Approx(r0.eta[0]).epsilon(1e-10));
  // D2 has zero conditional mean, so its sensitivity and multiplier vanish
  CHECK(multi.eta[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(multi.value == doctest::Approx(r0.value).epsilon(1e-10));
  CHECK(r1.correction() == doctest::Approx(0.0).epsilon(1e-12));

  SensitivityProblem one{&model, &b, {a0}};
  CHECK(multi_marginal_rule(one, ev, x, analytic()).value == doctest::Approx(r0.value).epsilon(1e-12));
}

TEST_CASE("comparison strategies") {
  auto s = pipeline::study_setup({});
  SensitivityProblem prob{&s.model, &s.backend, {s.attribute}};
  StrategyOptions o;
  o.fair = analytic();
  std::vector<double> x{1.0};
  auto d = strategies(prob, x, o);
  CHECK(d.unaware == doctest::Approx(7.0));
  CHECK(d.discr_free == doctest::Approx(6.0));
  CHECK(d.fair_ev == doctest::Approx(closed_form_marginal_fair({}, WeightFunction::expected_value(), 1.0)));
  auto t = decision_table({d}, {"X"});
  CHECK(t.rows.size() == 1);
  CHECK(t.has_column("P_U"));

  LinearGaussianParams indep;
  indep.tau = 0.0;
  auto si = pipeline::study_setup(indep);
  SensitivityProblem pi{&si.model, &si.backend, {si.attribute}};
  auto di = strategies(pi, x, o);
  CHECK(di.unaware == doctest::Approx(di.discr_free));
}

TEST_CASE("rule JSON carries the multipliers") {
  auto s = pipeline::study_setup({});
  SensitivityProblem prob{&s.model, &s.backend, {s.attribute}};
  std::vector<double> x{0.0};
  auto j = fair_rule(prob, WeightFunction::expected_value(), x, analytic()).to_json();
  CHECK(j.contains("eta"));
  CHECK(j["fair"].get<double>() == doctest::Approx(0.25));
}
