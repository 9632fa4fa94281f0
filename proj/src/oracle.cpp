#include "mfair/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "mfair/errors.hpp"
#include "mfair/perturbation.hpp"

namespace mfair {

std::vector<double> perturbed_outcomes(const PredictionModel& model, const ProtectedAttribute& attr, Variant variant,
                                       std::span<const double> x, const ConditionalSample& draws, double delta) {
  const std::size_t n = draws.size();
  const std::size_t m = static_cast<std::size_t>(draws.d.cols());
  const std::size_t i = attr.index;
  if (variant == Variant::cascade && !attr.cascade) throw InvalidInput("cascade perturbation needs a cascade spec");
  if (attr.spec.kind == ProtectedKind::discrete && draws.v.rows() != draws.d.rows())
    throw InvalidInput("discrete perturbation needs auxiliary uniforms in the sample");

  std::vector<double> y(n), d(m), xx(x.begin(), x.end());
  for (std::size_t r = 0; r < n; ++r) {
    const auto R = static_cast<Eigen::Index>(r);
    for (std::size_t j = 0; j < m; ++j) d[j] = draws.d(R, static_cast<Eigen::Index>(j));
    std::copy(x.begin(), x.end(), xx.begin());
    const double t = d[i];
    double t_new = t;
    switch (attr.spec.kind) {
      case ProtectedKind::continuous: t_new = perturb_continuous(t, delta); break;
      case ProtectedKind::compact: {
        double u = std::clamp(attr.spec.compact.cdf(t), 1e-15, 1.0 - 1e-15);
        t_new = perturb_compact(u, delta, attr.spec.compact);
        break;
      }
      case ProtectedKind::discrete: {
        const auto& law = attr.spec.discrete;
        double u = gdt_uniform(law, law.index_of(t), draws.v(R, static_cast<Eigen::Index>(i)));
        u = std::clamp(u, 1e-15, 1.0 - 1e-15);
        t_new = law.levels[perturb_discrete_level(u, delta, law)];
        break;
      }
    }
    if (variant == Variant::cascade) {
      const auto& spec = *attr.cascade;
      std::vector<double> ranks(spec.factors.size());
      for (std::size_t l = 0; l < ranks.size(); ++l) {
        const auto& f = spec.factors[l];
        std::size_t c = f.coordinate;
        double cur = c < m ? d[c] : x[c - m];
        ranks[l] = std::clamp(f.cdf(cur, t), 1e-15, 1.0 - 1e-15);
      }
      auto moved = cascade_sample(spec, t, t_new, ranks);
      for (std::size_t l = 0; l < ranks.size(); ++l) {
        const auto& f = spec.factors[l];
        if (spec.masked(f.coordinate)) continue;
        std::size_t c = f.coordinate;
        if (c < m)
          d[c] = moved[l];
        else
          xx[c - m] = moved[l];
      }
    }
    d[i] = t_new;
    y[r] = model.predict(d, xx) + draws.noise(R);
  }
  return y;
}

namespace {

double subset_risk(std::span<const double> y, const std::vector<bool>& keep, const WeightFunction& gamma,
                   std::span<const double> frozen) {
  std::vector<double> sub;
  sub.reserve(y.size());
  KahanSum adj;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (!keep[j]) continue;
    sub.push_back(y[j]);
    if (!frozen.empty()) adj.add(y[j] * frozen[j]);
  }
  EmpiricalDistribution dist(sub);
  double r = evaluate(gamma, dist);
  if (!frozen.empty()) r -= adj.value() / static_cast<double>(sub.size());
  return r;
}

}  // namespace

FdResult central_difference(std::span<const double> y_plus, std::span<const double> y_minus,
                            const WeightFunction& gamma, double delta, std::size_t batches,
                            std::span<const double> frozen) {
  const std::size_t n = y_plus.size();
  if (y_minus.size() != n || n == 0) throw InvalidInput("central difference: outcome samples differ in size");
  if (!frozen.empty() && frozen.size() != n) throw InvalidInput("central difference: frozen weights have wrong size");
  if (!(delta > 0.0 && delta <= 0.1)) throw InvalidInput("finite-difference step must lie in (0, 0.1]");
  std::vector<bool> all(n, true);
  FdResult r;
  r.rho_plus = subset_risk(y_plus, all, gamma, frozen);
  r.rho_minus = subset_risk(y_minus, all, gamma, frozen);
  auto est = jackknife(n, batches, [&](const std::vector<bool>& keep) {
    return (subset_risk(y_plus, keep, gamma, frozen) - subset_risk(y_minus, keep, gamma, frozen)) / (2.0 * delta);
  });
  r.estimate = (r.rho_plus - r.rho_minus) / (2.0 * delta);
  r.se = est.se;
  return r;
}

FdResult fd_sensitivity(const PredictionModel& model, const ConditionalSampler& sampler, const ProtectedAttribute& attr,
                        Variant variant, const WeightFunction& gamma, std::span<const double> x,
                        const FdOptions& opts, std::span<const double> frozen) {
  auto draws = sampler.draw(x, opts.n_draws, opts.seed);
  auto yp = perturbed_outcomes(model, attr, variant, x, draws, opts.delta);
  auto ym = perturbed_outcomes(model, attr, variant, x, draws, -opts.delta);
  return central_difference(yp, ym, gamma, opts.delta, opts.batches, frozen);
}

FairRuleCheck fair_rule_oracle(const SensitivityProblem& problem, const FairRule& rule, const WeightFunction& gamma,
                               const FdOptions& opts) {
  const std::size_t L = problem.attributes.size();
  if (rule.eta.size() != L) throw InvalidInput("fair rule oracle: rule and problem differ in attributes");
  SensitivityOptions so;
  so.route = Route::simulation;
  so.variant = rule.variant;
  so.formula = rule.formula;
  so.sim.n_draws = opts.n_draws;
  so.sim.seed = opts.seed;
  auto t = conditional_terms(problem, gamma, rule.x, so);
  const auto& sc = *t.scored;
  std::vector<double> frozen(sc.y.size(), 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = 0; j < frozen.size(); ++j) frozen[j] += rule.eta[l] * sc.score[l][j];
  FairRuleCheck out;
  for (std::size_t l = 0; l < L; ++l) {
    auto fd = fd_sensitivity(*problem.model, *problem.sampler, problem.attributes[l], rule.variant, gamma, rule.x,
                             opts, frozen);
    double rse = l < rule.residual_se.size() ? rule.residual_se[l] : 0.0;
    out.combined_se.push_back(std::sqrt(fd.se * fd.se + rse * rse));
    out.fd.push_back(fd);
  }
  return out;
}

double example32_quantile(const Example32& e, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidInput("quantile level outside [0,1]");
  if (!(e.p > 0.0 && e.p < 1.0) || e.c < 0.0 || e.x2_hi < e.x2_lo || e.c > e.x2_lo)
    throw InvalidInput("example parameters out of range");
  const double q = 1.0 - e.p;
  if (u <= q) return e.c * (u / q);
  return e.x2_lo + (e.x2_hi - e.x2_lo) * (u - q) / e.p;
}

Example32Result example32_check(const Example32& e, const WeightFunction& gamma, std::size_t n, std::uint64_t seed,
                                double delta) {
  example32_quantile(e, 0.5);
  if (n < 2) throw InvalidInput("example check needs at least two draws");
  Rng rng(seed);
  std::vector<double> y(n), dg(n), yp(n), ym(n);
  for (std::size_t j = 0; j < n; ++j) {
    bool second = uniform01(rng) < e.p;
    double d = e.c * uniform01(rng);
    double x2 = e.x2_lo + (e.x2_hi - e.x2_lo) * uniform01(rng);
    y[j] = second ? x2 : d;
    dg[j] = second ? 0.0 : d;  // D * dg/dD
    yp[j] = second ? x2 : d * (1.0 + delta);
    ym[j] = second ? x2 : d * (1.0 - delta);
  }
  Example32Result r;
  r.plugin = plugin_sensitivity(y, dg, gamma);
  r.oracle = central_difference(yp, ym, gamma, delta, 20);
  return r;
}

double example51_cdf(const Example51& e, double x, double delta) {
  if (!(x > 0.0)) return 0.0;
  double pd = perturb_discrete_mass(e.p, delta);
  double lx = std::log(x);
  return norm_cdf((lx - e.mu) / e.sigma) * (1.0 - pd) + norm_cdf((lx - 2.0 * e.mu) / e.sigma) * pd;
}

std::vector<double> example51_sample(const Example51& e, double delta, std::size_t n, std::uint64_t seed) {
  if (!(e.sigma > 0.0)) throw InvalidInput("example 5.1 needs sigma > 0");
  auto law = DiscreteLaw::bernoulli(e.p);
  CascadeSpec spec;
  spec.source = 0;
  CascadeFactor f;
  f.coordinate = 1;
  f.quantile = [&e](double v, double t) { return std::exp((t + 1.0) * e.mu + e.sigma * norm_quantile(v)); };
  f.cdf = [&e](double x, double t) { return x > 0.0 ? norm_cdf((std::log(x) - (t + 1.0) * e.mu) / e.sigma) : 0.0; };
  f.name = "lognormal";
  spec.factors.push_back(f);
  Rng rng(seed);
  std::vector<double> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t k = uniform01(rng) < e.p ? 1 : 0;
    double u = gdt_uniform(law, k, uniform01(rng));
    double v = uniform01(rng);
    double d_new = law.levels[perturb_discrete_level(u, delta, law)];
    out[j] = cascade_sample(spec, law.levels[k], d_new, std::span<const double>(&v, 1))[0];
  }
  return out;
}

double kolmogorov_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidInput("kolmogorov distance of an empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t j = 0; j < sample.size(); ++j) {
    double f = cdf(sample[j]);
    d = std::max({d, static_cast<double>(j + 1) / n - f, f - static_cast<double>(j) / n});
  }
  return d;
}

namespace {

struct GlmMath {
  Family family;
  Link link;
  double power;

  double mu(double eta) const {
    switch (link) {
      case Link::identity: return eta;
      case Link::log: return std::exp(std::clamp(eta, -700.0, 700.0));
      case Link::logit: return 1.0 / (1.0 + std::exp(-eta));
    }
    return eta;
  }
  double dmu(double eta, double m) const {
    (void)eta;
    switch (link) {
      case Link::identity: return 1.0;
      case Link::log: return m;
      case Link::logit: return m * (1.0 - m);
    }
    return 1.0;
  }
  double variance(double m) const {
    switch (family) {
      case Family::gaussian: return 1.0;
      case Family::poisson: return m;
      case Family::gamma: return m * m;
      case Family::tweedie: return std::pow(m, power);
      case Family::binomial: return m * (1.0 - m);
      case Family::custom: break;
    }
    throw InvalidInput("deviance oracle: unsupported family");
  }
  double eta_of(double m) const {
    switch (link) {
      case Link::identity: return m;
      case Link::log: return std::log(m);
      case Link::logit: return std::log(m / (1.0 - m));
    }
    return m;
  }
};

}  // namespace

DevianceOracleResult deviance_oracle(const Dataset& data, Family family, Link link, double power,
                                     std::size_t max_iter, double tol) {
  data.validate();
  if (family == Family::custom) throw InvalidInput("deviance oracle: custom family");
  const Eigen::Index n = data.y.size(), p = data.Z.cols() + 1;
  Eigen::VectorXd w = data.w.size() ? data.w : Eigen::VectorXd::Ones(n);
  const double wsum = w.sum();
  GlmMath g{family, link, power};

  // standardized design: column j -> (z - m_j) / s_j
  Eigen::VectorXd mj = Eigen::VectorXd::Zero(p - 1), sj = Eigen::VectorXd::Ones(p - 1);
  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  for (Eigen::Index j = 0; j + 1 < p; ++j) {
    auto col = data.Z.col(j);
    double m = (col.array() * w.array()).sum() / wsum;
    double s = std::sqrt(((col.array() - m).square() * w.array()).sum() / wsum);
    mj[j] = m;
    sj[j] = s > 0.0 ? s : 1.0;
    X.col(j + 1) = (col.array() - m) / sj[j];
  }

  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad) {
    Eigen::VectorXd eta = X * th;
    Eigen::VectorXd mu(n), dfde(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = g.mu(eta[i]);
      double v = std::max(g.variance(mu[i]), 1e-300);
      dfde[i] = -2.0 * w[i] * (data.y[i] - mu[i]) / v * g.dmu(eta[i], mu[i]) / wsum;
    }
    if (grad) *grad = X.transpose() * dfde;
    return mean_deviance(family, power, data.y, mu, w);
  };

  double ybar = (data.y.array() * w.array()).sum() / wsum;
  if (link == Link::log) ybar = std::max(ybar, 1e-8);
  if (link == Link::logit) ybar = std::clamp(ybar, 1e-6, 1.0 - 1e-6);
  Eigen::VectorXd th = Eigen::VectorXd::Zero(p);
  th[0] = g.eta_of(ybar);

  Eigen::VectorXd gr;
  double f = objective(th, &gr);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> hist;
  const std::size_t mem = 10;
  std::size_t it = 0, stalled = 0;
  for (; it < max_iter; ++it) {
    if (gr.lpNorm<Eigen::Infinity>() <= tol) break;
    // two-loop recursion
    Eigen::VectorXd q = gr;
    std::vector<double> alpha(hist.size());
    for (std::size_t k = hist.size(); k-- > 0;) {
      const auto& [s, yv] = hist[k];
      alpha[k] = s.dot(q) / yv.dot(s);
      q -= alpha[k] * yv;
    }
    if (!hist.empty()) q *= hist.back().first.dot(hist.back().second) / hist.back().second.squaredNorm();
    for (std::size_t k = 0; k < hist.size(); ++k) {
      const auto& [s, yv] = hist[k];
      double b = yv.dot(q) / yv.dot(s);
      q += s * (alpha[k] - b);
    }
    Eigen::VectorXd dir = -q;
    if (!(dir.dot(gr) < 0.0)) {
      dir = -gr;
      hist.clear();
    }
    double step = hist.empty() ? std::min(1.0, 1.0 / std::max(gr.norm(), 1e-300)) : 1.0;
    Eigen::VectorXd cand, gc;
    double fc = f;
    bool ok = false;
    for (int h = 0; h < 60; ++h) {
      cand = th + step * dir;
      fc = objective(cand, &gc);
      if (std::isfinite(fc) && fc <= f + 1e-4 * step * dir.dot(gr)) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
    Eigen::VectorXd s = cand - th, yv = gc - gr;
    if (s.dot(yv) > 1e-300) {
      hist.emplace_back(s, yv);
      if (hist.size() > mem) hist.pop_front();
    }
    stalled = (f - fc) <= 1e-16 * std::max(1.0, std::abs(f)) ? stalled + 1 : 0;
    th = cand;
    f = fc;
    gr = gc;
    if (stalled >= 20) break;
  }

  DevianceOracleResult r;
  r.deviance = f;
  r.iterations = it;
  r.gradient_norm = gr.norm();
  r.coef.assign(static_cast<std::size_t>(p), 0.0);
  double b0 = th[0];
  for (Eigen::Index j = 1; j < p; ++j) {
    r.coef[static_cast<std::size_t>(j)] = th[j] / sj[j - 1];
    b0 -= th[j] * mj[j - 1] / sj[j - 1];
  }
  r.coef[0] = b0;
  return r;
}

}  // namespace mfair
