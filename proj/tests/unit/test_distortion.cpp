#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "mfair/distortion.hpp"
#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

using namespace mfair;

namespace {

std::vector<double> iota_values(int n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

std::vector<double> random_sample(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = std_normal(rng) * 2.0 + 1.0;
  return v;
}

}  // namespace

TEST_CASE("quantile is the left-continuous inverse") {
  std::vector<double> y{1, 2, 3};
  EmpiricalDistribution d(y);
  CHECK(quantile(d, 0.5) == 2.0);
  CHECK(quantile(d, 1.0 / 3.0) == 1.0);
  CHECK(quantile(d, 0.34) == 2.0);
  CHECK(quantile(d, 1.0) == 3.0);

  std::vector<double> v{0, 10}, p{0.9, 0.1};
  EmpiricalDistribution w(v, p);
  CHECK(quantile(w, 0.95) == 10.0);
  CHECK(quantile(w, 0.9) == 0.0);
}

TEST_CASE("expected shortfall on small samples") {
  auto y100 = iota_values(100);
  CHECK(evaluate(WeightFunction::expected_shortfall(0.95), EmpiricalDistribution(y100)) == doctest::Approx(98.0));
  auto y10 = iota_values(10);
  EmpiricalDistribution d(y10);
  CHECK(evaluate(WeightFunction::expected_shortfall(0.9), d) == doctest::Approx(10.0));
  CHECK(evaluate(WeightFunction::expected_value(), d) == doctest::Approx(5.5));

  auto r = decompose(WeightFunction::expected_shortfall(0.9), d);
  CHECK(r.total == doctest::Approx(10.0));
  CHECK(r.expectation == doctest::Approx(5.5));
  CHECK(r.margin == doctest::Approx(4.5));
  CHECK(decompose(WeightFunction::expected_value(), d).margin == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("tabulated weight is integrated exactly") {
  // gamma = 0.5 below 0.25, linear to 1.5 at 0.75, flat after
  auto g = WeightFunction::tabulated({0.25, 0.75}, {0.5, 1.5});
  CHECK(g(0.1) == doctest::Approx(0.5));
  CHECK(g(0.5) == doctest::Approx(1.0));
  CHECK(g(0.9) == doctest::Approx(1.5));
  CHECK(g.integral(0.0, 1.0) == doctest::Approx(1.0));
  CHECK(g.integral(0.0, 0.5) == doctest::Approx(0.3125));
  std::vector<double> y{1, 2};
  CHECK(evaluate(g, EmpiricalDistribution(y)) == doctest::Approx(1.6875));
}

TEST_CASE("weight function parsing and closed forms") {
  CHECK(WeightFunction::parse("ev").is_constant());
  auto es = WeightFunction::parse("es:0.9");
  CHECK(es(0.5) == 0.0);
  CHECK(es(0.95) == doctest::Approx(10.0));
  CHECK(es.normal_moment() == doctest::Approx(1.754983319324869).epsilon(1e-9));
  CHECK(es.square_integral() == doctest::Approx(10.0));
  CHECK(WeightFunction::expected_value().normal_moment() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(WeightFunction::parse("bogus"), InvalidInput);
  CHECK_THROWS_AS(WeightFunction::parse("es:1.5"), InvalidInput);
  CHECK_THROWS_AS(WeightFunction::tabulated({0.5, 0.4}, {1, 1}), InvalidInput);
}

TEST_CASE("invalid samples are rejected") {
  std::vector<double> empty;
  CHECK_THROWS_AS(EmpiricalDistribution{empty}, InvalidInput);
  std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(EmpiricalDistribution{bad}, InvalidInput);
}

TEST_CASE("property: positive homogeneity and translation invariance") {
  auto gammas = {WeightFunction::expected_value(), WeightFunction::expected_shortfall(0.8),
                 WeightFunction::tabulated({0.1, 0.6, 0.9}, {0.2, 1.0, 2.0})};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto y = random_sample(257, seed);
    for (const auto& g : gammas) {
      double base = evaluate(g, EmpiricalDistribution(y));
      double mass = g.integral(0.0, 1.0);
      std::vector<double> scaled(y), shifted(y);
      for (auto& v : scaled) v *= 3.5;
      for (auto& v : shifted) v += 2.0;
      CHECK(evaluate(g, EmpiricalDistribution(scaled)) == doctest::Approx(3.5 * base).epsilon(1e-12));
      CHECK(evaluate(g, EmpiricalDistribution(shifted)) == doctest::Approx(base + 2.0 * mass).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: linearity in gamma and rank weights") {
  auto y = random_sample(500, 11);
  EmpiricalDistribution d(y);
  auto g1 = WeightFunction::expected_shortfall(0.7);
  auto g2 = WeightFunction::tabulated({0.2, 0.8}, {0.0, 3.0});
  double lhs = evaluate(g1 * 0.3 + g2 * 1.7, d);
  CHECK(lhs == doctest::Approx(0.3 * evaluate(g1, d) + 1.7 * evaluate(g2, d)).epsilon(1e-12));

  for (const auto& g : {g1, g2}) {
    auto w = rank_weights(g, d);
    KahanSum s;
    for (std::size_t j = 0; j < y.size(); ++j) s.add(y[j] * w[j] / y.size());
    CHECK(s.value() == doctest::Approx(evaluate(g, d)).epsilon(1e-12));
  }
  CHECK(evaluate(WeightFunction::expected_value(), d) == doctest::Approx(mean(y)).epsilon(1e-12));
}

TEST_CASE("property: quantile is monotone and ties share weights") {
  auto y = random_sample(101, 3);
  EmpiricalDistribution d(y);
  double prev = quantile(d, 1e-6);
  for (int k = 1; k <= 1000; ++k) {
    double q = quantile(d, k / 1000.0);
    CHECK(q >= prev);
    prev = q;
  }
  std::vector<double> tied{1, 2, 2, 2, 5};
  auto w = rank_weights(WeightFunction::expected_shortfall(0.5), EmpiricalDistribution(tied));
  CHECK(w[1] == doctest::Approx(w[2]));
  CHECK(w[2] == doctest::Approx(w[3]));
}

TEST_CASE("rank integral reproduces a one-draw move") {
  auto y = random_sample(2000, 5);
  auto g = WeightFunction::expected_shortfall(0.9);
  EmpiricalDistribution d(y);
  RankIntegral G(g, d);
  double base = evaluate(g, d);
  auto moved = y;
  std::size_t j = std::max_element(y.begin(), y.end()) - y.begin();
  moved[j] += 0.5;
  double change = evaluate(g, EmpiricalDistribution(moved)) - base;
  CHECK(change == doctest::Approx((G(moved[j]) - G(y[j])) / y.size()).epsilon(1e-9));
}
