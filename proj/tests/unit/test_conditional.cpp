#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfair/conditional.hpp"
#include "mfair/errors.hpp"
#include "mfair/fairness.hpp"
#include "mfair/stats.hpp"

using namespace mfair;

namespace {

GaussianBackend study() { return GaussianBackend::bivariate(0.0, 3.0, 1.0, 2.0, 0.5, 0.5); }

}  // namespace

TEST_CASE("bivariate gaussian conditional moments") {
  auto b = study();
  std::vector<double> x1{1.0}, x0{0.0}, xm{-3.0};
  CHECK(b.cond_mean_D(0, x1) == doctest::Approx(4.0));
  CHECK(b.cond_second_moment_D(0, x1) == doctest::Approx(19.0));
  CHECK(b.cond_mean_D(0, xm) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(b.cond_cov()(0, 0) == doctest::Approx(3.0));

  auto indep = GaussianBackend::bivariate(0.0, 3.0, 1.0, 2.0, 0.0, 0.5);
  CHECK(indep.cond_mean_D(0, x1) == doctest::Approx(3.0));

  auto l = FeatureLayout::plain(1, 1);
  auto m = PredictionModel::linear({1.0, 1.0, 2.0}, l);
  auto mom = b.linear_moments(m, x0);
  CHECK(mom.mean_y == doctest::Approx(4.0));
  CHECK(mom.var_y == doctest::Approx(3.25));
  // E[Y D | x=0] = Cov + E[D] E[Y]
  CHECK(mom.cov_dy(0) + mom.mean_d(0) * mom.mean_y == doctest::Approx(15.0));
}

TEST_CASE("gaussian sampler matches its moments") {
  auto b = study();
  std::vector<double> x{1.0};
  auto s = b.draw(x, 200000, 5);
  CHECK(s.d.col(0).mean() == doctest::Approx(4.0).epsilon(0.01));
  CHECK(s.d.col(0).array().square().mean() == doctest::Approx(19.0).epsilon(0.01));
  auto again = b.draw(x, 200000, 5);
  CHECK((again.d - s.d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("regression backend recovers the conditional mean") {
  Rng rng(12);
  const int n = 100000;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd d(n), w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    double z1 = std_normal(rng), z2 = std_normal(rng);
    X(i, 0) = z1;
    d(i) = 3.0 + 2.0 * (0.5 * z1 + std::sqrt(0.75) * z2);
  }
  RegressionBackend r(FeatureMap::identity({"X"}));
  r.fit(RegressionBackend::mean_key(0), X, d, w, {});
  std::vector<double> x{1.0};
  CHECK(r.cond_mean_D(0, x) == doctest::Approx(4.0).epsilon(0.0125));
  CHECK_THROWS_AS(r.cond_second_moment_D(0, x), NotFitted);
}

TEST_CASE("class probabilities sum to one") {
  Rng rng(3);
  const int n = 5000;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd d(n), w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = std_normal(rng);
    d(i) = uniform01(rng) < 1.0 / (1.0 + std::exp(-X(i, 0))) ? 1.0 : 0.0;
  }
  auto law = DiscreteLaw::bernoulli(d.mean());
  RegressionBackend r(FeatureMap::identity({"X"}));
  r.fit_class_probs(0, X, d, law, w);
  for (double xv : {-2.0, 0.0, 1.5}) {
    std::vector<double> x{xv};
    double p0 = r.cond_class_prob(0, 0, x), p1 = r.cond_class_prob(0, 1, x);
    CHECK(p0 + p1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p1 == doctest::Approx(1.0 / (1.0 + std::exp(-xv))).epsilon(0.1));
  }
}

TEST_CASE("copula sampler class probabilities") {
  CopulaSampler indep(ProtectedSpec::on_levels(DiscreteLaw({0, 1, 2}, {0.2, 0.5, 0.3})), 0.0, 0.0, 1.0, 1, 0.5);
  std::vector<double> x{0.7};
  CHECK(indep.class_prob(0, 1, x) == doctest::Approx(0.5));
  CopulaSampler dep(ProtectedSpec::on_levels(DiscreteLaw({0, 1, 2}, {0.2, 0.5, 0.3})), 0.6, 0.0, 1.0, 1, 0.5);
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) total += dep.class_prob(0, k, x);
  CHECK(total == doctest::Approx(1.0));
  CHECK_THROWS_AS(GaussianBackend::bivariate(0, 3, 1, 2, 0.5, 0.5).class_prob(0, 0, x), InvalidInput);
}

TEST_CASE("conditional tail tracks the gaussian expected shortfall") {
  // Y | x ~ N(10 + x, 1); ES_0.9 = 10 + x + 1.7550
  Rng rng(21);
  const int n = 40000;
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n), w = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = 4.0 * uniform01(rng) - 2.0;
    y(i) = 10.0 + X(i, 0) + std_normal(rng);
  }
  auto tail = ConditionalTail::fit(FeatureMap::identity({"X"}), X, y, w, 0.9);
  CHECK(tail.exceedances() > 3000);
  for (double xv : {-1.5, -0.5, 0.0, 0.5, 1.5}) {
    std::vector<double> x{xv};
    CHECK(tail.cond_var(x) == doctest::Approx(10.0 + xv + 1.2815515655446004).epsilon(0.02));
    CHECK(tail.cond_es(x) == doctest::Approx(10.0 + xv + 1.754983319324869).epsilon(0.02));
  }
}

TEST_CASE("conditional tail needs exceedances") {
  Eigen::MatrixXd X(20, 1);
  Eigen::VectorXd y(20), w = Eigen::VectorXd::Ones(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = i;
    y(i) = i;
  }
  CHECK_THROWS_AS(ConditionalTail::fit(FeatureMap::identity({"X"}), X, y, w, 0.9), TooFewExceedances);
}

TEST_CASE("polynomial feature map") {
  auto f = FeatureMap::polynomial({"a", "b"}, 2);
  std::vector<double> x{2.0, -1.0};
  auto z = f.apply(x);
  REQUIRE(z.size() == 4);
  CHECK(z[0] == 2.0);
  CHECK(z[1] == 4.0);
  CHECK(z[2] == -1.0);
  CHECK(z[3] == 1.0);
  CHECK(f.names[1] == "a^2");
}
