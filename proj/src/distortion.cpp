#include "mfair/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mfair/csv.hpp"
#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

WeightFunction WeightFunction::expected_value() {
  WeightFunction w;
  w.terms_.push_back({Term::constant, 1.0, 0.0, {}, {}});
  w.label_ = "ev";
  return w;
}

WeightFunction WeightFunction::expected_shortfall(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidInput("expected shortfall level must lie in [0,1)");
  WeightFunction w;
  w.terms_.push_back({Term::tail, 1.0 / (1.0 - alpha), alpha, {}, {}});
  w.label_ = "es:" + csv::fmt(alpha);
  return w;
}

WeightFunction WeightFunction::tabulated(std::vector<double> u, std::vector<double> g, std::string label) {
  if (u.empty() || u.size() != g.size()) throw InvalidInput("tabulated weight: grid and values must be non-empty and equal length");
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(g[i])) throw InvalidInput("tabulated weight: non-finite entry");
    if (u[i] < 0.0 || u[i] > 1.0) throw InvalidInput("tabulated weight: grid outside [0,1]");
    if (i > 0 && !(u[i] > u[i - 1])) throw InvalidInput("tabulated weight: grid must be strictly increasing");
  }
  WeightFunction w;
  w.terms_.push_back({Term::table, 1.0, 0.0, std::move(u), std::move(g)});
  w.label_ = std::move(label);
  return w;
}

WeightFunction WeightFunction::load_csv(const std::string& path) {
  auto t = csv::read_file(path);
  return tabulated(t.numeric("u"), t.numeric("gamma"), "table:" + path);
}

WeightFunction WeightFunction::parse(const std::string& text) {
  if (text == "ev") return expected_value();
  if (text.rfind("es:", 0) == 0) return expected_shortfall(csv::to_double(text.substr(3), "--rho level"));
  if (text.rfind("table:", 0) == 0) return load_csv(text.substr(6));
  throw InvalidInput("unknown weight function '" + text + "' (expected ev, es:<level> or table:<csv>)");
}

double WeightFunction::term_value(const Term& t, double u) {
  switch (t.kind) {
    case Term::constant:
      return t.coef;
    case Term::tail:
      return u >= t.alpha ? t.coef : 0.0;
    case Term::table: {
      const auto& x = t.u;
      const auto& y = t.g;
      if (u <= x.front()) return t.coef * y.front();
      if (u >= x.back()) return t.coef * y.back();
      auto it = std::upper_bound(x.begin(), x.end(), u);
      std::size_t k = static_cast<std::size_t>(it - x.begin());
      double w = (u - x[k - 1]) / (x[k] - x[k - 1]);
      return t.coef * (y[k - 1] + w * (y[k] - y[k - 1]));
    }
  }
  return 0.0;
}

double WeightFunction::term_integral(const Term& t, double a, double b) {
  if (b <= a) return 0.0;
  switch (t.kind) {
    case Term::constant:
      return t.coef * (b - a);
    case Term::tail:
      return t.coef * std::max(0.0, b - std::max(a, t.alpha));
    case Term::table: {
      // piecewise linear between knots, exact trapezoid
      std::vector<double> pts{a};
      for (double k : t.u)
        if (k > a && k < b) pts.push_back(k);
      pts.push_back(b);
      KahanSum s;
      for (std::size_t i = 1; i < pts.size(); ++i)
        s.add(0.5 * (pts[i] - pts[i - 1]) * (term_value(t, pts[i - 1]) + term_value(t, pts[i])));
      return s.value();
    }
  }
  return 0.0;
}

double WeightFunction::operator()(double u) const {
  double v = 0.0;
  for (const auto& t : terms_) v += term_value(t, u);
  return v;
}

double WeightFunction::integral(double a, double b) const {
  a = std::clamp(a, 0.0, 1.0);
  b = std::clamp(b, 0.0, 1.0);
  double v = 0.0;
  for (const auto& t : terms_) v += term_integral(t, a, b);
  return v;
}

namespace {
// int_a^b Phi^{-1}(u) du
double probit_integral(double a, double b) {
  auto phi_at = [](double u) { return (u <= 0.0 || u >= 1.0) ? 0.0 : norm_pdf(norm_quantile(u)); };
  return phi_at(a) - phi_at(b);
}
}  // namespace

double WeightFunction::normal_moment() const {
  double v = 0.0;
  for (const auto& t : terms_) {
    switch (t.kind) {
      case Term::constant:
        break;
      case Term::tail:
        v += t.coef * probit_integral(t.alpha, 1.0);
        break;
      case Term::table: {
        v += t.coef * t.g.front() * probit_integral(0.0, t.u.front());
        v += t.coef * t.g.back() * probit_integral(t.u.back(), 1.0);
        for (std::size_t i = 1; i < t.u.size(); ++i) {
          double a = t.u[i - 1], b = t.u[i];
          auto f = [&](double u) { return term_value(t, u) * norm_quantile(u); };
          v += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 10, 1e-12);
        }
        break;
      }
    }
  }
  return v;
}

double WeightFunction::square_integral() const {
  std::vector<double> br{0.0, 1.0};
  for (const auto& t : terms_) {
    if (t.kind == Term::tail) br.push_back(t.alpha);
    if (t.kind == Term::table) br.insert(br.end(), t.u.begin(), t.u.end());
  }
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  // gamma is linear on each piece, so 3-point Gauss-Legendre is exact for gamma^2
  static const double nodes[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  KahanSum s;
  for (std::size_t i = 1; i < br.size(); ++i) {
    double a = br[i - 1], b = br[i], h = 0.5 * (b - a), c = 0.5 * (a + b);
    if (h <= 0.0) continue;
    for (int k = 0; k < 3; ++k) {
      double g = (*this)(c + h * nodes[k]);
      s.add(h * weights[k] * g * g);
    }
  }
  return s.value();
}

WeightFunction WeightFunction::operator+(const WeightFunction& o) const {
  WeightFunction w = *this;
  w.terms_.insert(w.terms_.end(), o.terms_.begin(), o.terms_.end());
  w.label_ = label_ + "+" + o.label_;
  return w;
}

WeightFunction WeightFunction::operator*(double c) const {
  WeightFunction w = *this;
  for (auto& t : w.terms_) t.coef *= c;
  w.label_ = csv::fmt(c) + "*" + label_;
  return w;
}

bool WeightFunction::is_constant() const {
  return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) {
    return t.kind == Term::constant || (t.kind == Term::tail && t.alpha == 0.0);
  });
}

EmpiricalDistribution::EmpiricalDistribution(std::span<const double> values) { build(values, {}); }

EmpiricalDistribution::EmpiricalDistribution(std::span<const double> values, std::span<const double> probs) {
  if (probs.size() != values.size()) throw InvalidInput("empirical distribution: weights and values differ in length");
  build(values, probs);
}

void EmpiricalDistribution::build(std::span<const double> values, std::span<const double> probs) {
  std::size_t n = values.size();
  if (n == 0) throw InvalidInput("empirical distribution: empty sample");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidInput("empirical distribution: non-finite value");
  uniform_ = probs.empty();
  if (uniform_) {
    probs_.assign(n, 1.0 / static_cast<double>(n));
  } else {
    KahanSum s;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput("empirical distribution: weights must be non-negative");
      s.add(p);
    }
    if (std::abs(s.value() - 1.0) > 1e-12) throw InvalidInput("empirical distribution: weights must sum to 1");
    probs_.assign(probs.begin(), probs.end());
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  sorted_.resize(n);
  sorted_probs_.resize(n);
  cum_.resize(n);
  KahanSum c;
  for (std::size_t j = 0; j < n; ++j) {
    sorted_[j] = values[order_[j]];
    sorted_probs_[j] = probs_[order_[j]];
    if (uniform_) {
      cum_[j] = static_cast<double>(j + 1) / static_cast<double>(n);
    } else {
      c.add(sorted_probs_[j]);
      cum_[j] = std::min(1.0, c.value());
    }
  }
  cum_.back() = 1.0;
}

double EmpiricalDistribution::quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidInput("quantile level must lie in [0,1]");
  auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
  if (it == cum_.end()) return sorted_.back();
  return sorted_[static_cast<std::size_t>(it - cum_.begin())];
}

double EmpiricalDistribution::cdf(double y) const {
  auto it = std::upper_bound(sorted_.begin(), sorted_.end(), y);
  if (it == sorted_.begin()) return 0.0;
  return cum_[static_cast<std::size_t>(it - sorted_.begin()) - 1];
}

double quantile(const EmpiricalDistribution& dist, double u) { return dist.quantile(u); }

double evaluate(const WeightFunction& gamma, const EmpiricalDistribution& dist) {
  const auto& y = dist.sorted_values();
  const auto& c = dist.cumulative();
  KahanSum s;
  double prev = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (c[j] > prev) s.add(y[j] * gamma.integral(prev, c[j]));
    prev = c[j];
  }
  return s.value();
}

RiskDecomposition decompose(const WeightFunction& gamma, const EmpiricalDistribution& dist) {
  RiskDecomposition r;
  r.total = evaluate(gamma, dist);
  r.expectation = evaluate(WeightFunction::expected_value(), dist);
  r.margin = evaluate(gamma - WeightFunction::expected_value(), dist);
  return r;
}

std::vector<double> rank_weights(const WeightFunction& gamma, const EmpiricalDistribution& dist) {
  const auto& y = dist.sorted_values();
  const auto& c = dist.cumulative();
  const auto& ord = dist.order();
  std::size_t n = y.size();
  std::vector<double> w(n, 0.0);
  std::size_t j = 0;
  double lo = 0.0;
  while (j < n) {
    std::size_t k = j;
    while (k + 1 < n && y[k + 1] == y[j]) ++k;
    double hi = c[k];
    double avg = hi > lo ? gamma.integral(lo, hi) / (hi - lo) : gamma(hi);
    for (std::size_t i = j; i <= k; ++i) w[ord[i]] = avg;
    lo = hi;
    j = k + 1;
  }
  return w;
}

RankIntegral::RankIntegral(const WeightFunction& gamma, const EmpiricalDistribution& dist) {
  const auto& y = dist.sorted_values();
  const auto& c = dist.cumulative();
  std::size_t n = y.size();
  knots_ = y;
  slope_.resize(n);
  prefix_.resize(n);
  double lo = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    slope_[j] = c[j] > lo ? gamma.integral(lo, c[j]) / (c[j] - lo) : gamma(c[j]);
    lo = c[j];
  }
  prefix_[0] = 0.0;
  for (std::size_t j = 1; j < n; ++j) prefix_[j] = prefix_[j - 1] + slope_[j - 1] * (knots_[j] - knots_[j - 1]);
}

double RankIntegral::operator()(double y) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), y);
  if (it == knots_.begin()) return slope_.front() * (y - knots_.front());
  std::size_t j = static_cast<std::size_t>(it - knots_.begin()) - 1;
  return prefix_[j] + slope_[j] * (y - knots_[j]);
}

}  // namespace mfair
