#include <doctest.h>

#include <cmath>
#include <vector>

#include "mfair/errors.hpp"
#include "mfair/perturbation.hpp"
#include "mfair/stats.hpp"

using namespace mfair;

TEST_CASE("frozen perturbation values") {
  CHECK(perturb_continuous(3.0, 0.1) == doctest::Approx(3.3));
  CHECK(perturb_continuous(0.0, 0.4) == 0.0);
  CHECK(perturb_compact(0.8, 0.2, CompactLaw::uniform(0.0, 1.0)) == doctest::Approx(0.8437392943621864).epsilon(1e-10));
  CHECK(perturb_discrete_mass(0.8, 0.2) == doctest::Approx(0.7584580120291634).epsilon(1e-10));
  CHECK(perturb_discrete_mass(0.5, 0.3) == doctest::Approx(0.5));
  CHECK(perturb_discrete_mass(0.3, 0.0) == doctest::Approx(0.3));
}

TEST_CASE("discrete law cuts") {
  DiscreteLaw law({0, 1, 2}, {0.2, 0.5, 0.3});
  CHECK(law.cumulative(0) == doctest::Approx(0.2));
  CHECK(law.cumulative(1) == doctest::Approx(0.7));
  CHECK(law.index_of(2.0) == 2);
  CHECK_THROWS_AS(law.index_of(1.5), InvalidInput);
  double q = norm_quantile(0.85);
  CHECK(DiscreteLaw::bernoulli(0.15).cut_weight(0) == doctest::Approx(-q * norm_pdf(q)).epsilon(1e-12));
  CHECK(DiscreteLaw::bernoulli(0.15).cut_weight(0) == doctest::Approx(-0.24165353972639464).epsilon(1e-10));
  CHECK_THROWS_AS(DiscreteLaw({0, 1}, {0.5, 0.6}), InvalidInput);
  CHECK_THROWS_AS(DiscreteLaw({1, 0}, {0.5, 0.5}), InvalidInput);
}

TEST_CASE("property: compact perturbation stays in the support and is monotone") {
  auto law = CompactLaw::beta(2.0, 5.0, 1.0, 3.0);
  for (double delta : {-0.3, 0.1, 0.8}) {
    double prev = law.lo;
    for (int k = 1; k < 200; ++k) {
      double u = k / 200.0;
      double v = perturb_compact(u, delta, law);
      CHECK(v >= law.lo);
      CHECK(v <= law.hi);
      CHECK(v >= prev);
      prev = v;
    }
  }
  // delta = 0 gives back the quantile
  CHECK(perturb_compact(0.3, 0.0, law) == doctest::Approx(law.quantile(0.3)).epsilon(1e-9));
}

TEST_CASE("property: discrete mass maps into (0,1) and fixes one half") {
  for (double p : {0.01, 0.2, 0.5, 0.7, 0.99})
    for (double delta : {-0.5, 0.0, 0.5, 2.0}) {
      double m = perturb_discrete_mass(p, delta);
      CHECK(m > 0.0);
      CHECK(m < 1.0);
      // moves towards one half for positive delta
      if (delta > 0.0) CHECK(std::abs(m - 0.5) <= std::abs(p - 0.5) + 1e-15);
    }
}

TEST_CASE("level perturbation agrees with the mass perturbation") {
  auto law = DiscreteLaw::bernoulli(0.2);
  Rng rng(4);
  const int n = 200000;
  int ones = 0;
  for (int j = 0; j < n; ++j) {
    double u = uniform01(rng);
    ones += law.levels[perturb_discrete_level(u, 0.3, law)] == 1.0 ? 1 : 0;
  }
  double se = std::sqrt(0.25 / n);
  CHECK(std::abs(static_cast<double>(ones) / n - perturb_discrete_mass(0.2, 0.3)) < 4 * se);
  // generalized transform lands inside the level's cell
  double u = gdt_uniform(law, 1, 0.5);
  CHECK(u == doctest::Approx(0.9));
  CHECK(perturb_discrete_level(0.9, 0.0, law) == 1);
}

TEST_CASE("gaussian linear cascade factor") {
  auto f = CascadeFactor::gaussian_linear(1, 0.0, 0.25, 3.0, std::sqrt(0.75));
  CHECK(cond_quantile_slope(f, 0.3, 1.0) == doctest::Approx(0.25));
  CHECK(cond_quantile_slope(f, 0.9, -2.0) == doctest::Approx(0.25));
  CHECK(f.quantile(0.5, 3.0) == doctest::Approx(0.0));
  CHECK(f.quantile(0.5, 7.0) == doctest::Approx(1.0));

  auto flat = CascadeFactor::gaussian_linear(1, 0.0, 0.0, 3.0, 1.0);
  CHECK(cond_quantile_slope(flat, 0.3, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("cascade sample keeps ranks and honours the mask") {
  CascadeSpec spec;
  spec.factors.push_back(CascadeFactor::gaussian_linear(1, 0.0, 0.25, 3.0, 1.0));
  spec.factors.push_back(CascadeFactor::gaussian_linear(2, 1.0, -0.5, 3.0, 2.0));
  std::vector<double> v{0.3, 0.8};
  auto same = cascade_sample(spec, 2.0, 2.0, v);
  CHECK(same[0] == doctest::Approx(spec.factors[0].quantile(0.3, 2.0)));
  CHECK(same[1] == doctest::Approx(spec.factors[1].quantile(0.8, 2.0)));
  auto moved = cascade_sample(spec, 2.0, 4.0, v);
  CHECK(moved[0] - same[0] == doctest::Approx(0.5));
  CHECK(moved[1] - same[1] == doctest::Approx(-1.0));
  spec.mask = {2};
  auto masked = cascade_sample(spec, 2.0, 4.0, v);
  CHECK(masked[1] == doctest::Approx(same[1]));
  CHECK(masked[0] == doctest::Approx(moved[0]));
  auto scaled = cascade_sample_scaled(spec, 2.0, 1.0, v);
  CHECK(scaled[0] == doctest::Approx(moved[0]));
}

TEST_CASE("empirical cascade table recovers the gaussian slope") {
  Rng rng(8);
  const int n = 1000000;
  std::vector<double> t(n), x(n);
  for (int j = 0; j < n; ++j) {
    double z1 = std_normal(rng), z2 = std_normal(rng);
    x[j] = z1;
    t[j] = 3.0 + 2.0 * (0.5 * z1 + std::sqrt(0.75) * z2);
  }
  std::vector<double> vg;
  for (int k = 1; k < 20; ++k) vg.push_back(k / 20.0);
  auto table = CascadeTable::from_samples(t, x, 50, vg);
  auto f = CascadeFactor::from_table(1, table);
  for (double v : {0.25, 0.5, 0.75}) CHECK(cond_quantile_slope(f, v, 3.0) == doctest::Approx(0.25).epsilon(0.08));
  CHECK(table.cdf(table.quantile(0.5, 3.0), 3.0) == doctest::Approx(0.5).epsilon(1e-6));
}
