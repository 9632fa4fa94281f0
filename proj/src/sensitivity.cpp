#include "mfair/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

std::string to_string(Variant v) { return v == Variant::marginal ? "marginal" : "cascade"; }
std::string to_string(Formula f) { return f == Formula::exact ? "exact" : "published"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::analytic: return "analytic";
    case Method::simulation: return "simulation";
    case Method::regression: return "regression";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "marginal") return Variant::marginal;
  if (s == "cascade") return Variant::cascade;
  throw InvalidInput("unknown variant '" + s + "'");
}

Formula formula_from_string(const std::string& s) {
  if (s == "exact") return Formula::exact;
  if (s == "published") return Formula::published;
  throw InvalidInput("unknown formula '" + s + "'");
}

void SensitivityProblem::validate(Variant variant) const {
  if (!model) throw InvalidInput("sensitivity: no prediction model");
  if (!sampler) throw InvalidInput("sensitivity: no conditional sampler");
  if (attributes.empty()) throw InvalidInput("sensitivity: no protected attribute");
  if (sampler->n_protected() != model->n_protected())
    throw InvalidInput("sensitivity: sampler and model disagree on the protected block");
  if (sampler->n_other() != model->n_other())
    throw InvalidInput("sensitivity: sampler and model disagree on the covariates");
  for (const auto& a : attributes) {
    if (a.index >= model->n_protected()) throw InvalidInput("sensitivity: protected index out of range");
    if (variant == Variant::cascade) {
      if (!a.cascade) throw InvalidInput("cascade variant needs conditional-quantile slopes for every attribute");
      a.cascade->validate();
      if (a.cascade->source != a.index) throw InvalidInput("cascade source does not match the attribute index");
      for (const auto& f : a.cascade->factors) {
        if (f.coordinate >= model->layout().size()) throw InvalidInput("cascade factor coordinate out of range");
        if (f.coordinate == a.index) throw InvalidInput("cascade factor on the source coordinate");
      }
    }
  }
}

std::string sensitivity_kind(const ProtectedAttribute& attr, Variant variant, const WeightFunction& gamma) {
  const std::string pre = variant == Variant::marginal ? "marginal_" : "cascade_";
  switch (attr.spec.kind) {
    case ProtectedKind::continuous: return pre + "continuous";
    case ProtectedKind::compact: return pre + "compact";
    case ProtectedKind::discrete:
      if (variant == Variant::cascade) return pre + "discrete";
      return pre + (gamma.is_constant() ? "discrete_mean" : "discrete_distortion");
  }
  return pre;
}

namespace {

double joint_value(std::size_t c, std::span<const double> d, std::span<const double> x) {
  return c < d.size() ? d[c] : x[c - d.size()];
}

void set_joint(std::size_t c, double value, std::vector<double>& d, std::vector<double>& x) {
  if (c < d.size())
    d[c] = value;
  else
    x[c - d.size()] = value;
}

double clamp_unit(double u) { return std::clamp(u, 1e-15, 1.0 - 1e-15); }

// Conditional rank of the factor's current value given the source value t.
double factor_rank(const CascadeFactor& f, double value, double t) {
  if (!f.cdf) throw InvalidInput("cascade factor '" + f.name + "' has no conditional cdf");
  return clamp_unit(f.cdf(value, t));
}

// sum over unmasked factors of dg/dx_l * dF^{-1}_l/dt at the draw.
double cascade_chain(const PredictionModel& model, const CascadeSpec& spec, std::span<const double> d,
                     std::span<const double> x) {
  const double t = d[spec.source];
  double acc = 0.0;
  for (const auto& f : spec.factors) {
    if (spec.masked(f.coordinate)) continue;
    double slope = f.linear_slope ? *f.linear_slope
                                  : cond_quantile_slope(f, factor_rank(f, joint_value(f.coordinate, d, x), t), t);
    acc += model.partial_joint(f.coordinate, d, x).value * slope;
  }
  return acc;
}

// g at the point where the source takes level t_new and the unmasked factors
// follow their conditional quantiles at the kept ranks.
double cascade_value(const PredictionModel& model, const CascadeSpec& spec, std::span<const double> d,
                     std::span<const double> x, double t_new) {
  std::vector<double> dd(d.begin(), d.end()), xx(x.begin(), x.end());
  const double t = d[spec.source];
  dd[spec.source] = t_new;
  for (const auto& f : spec.factors) {
    if (spec.masked(f.coordinate)) continue;
    double v = factor_rank(f, joint_value(f.coordinate, d, x), t);
    set_joint(f.coordinate, f.quantile(v, t_new), dd, xx);
  }
  return model.predict(dd, xx);
}

// Published cascade change: the per-coordinate differences, each taken with
// everything else at the observed draw.
double cascade_coordinate_sum(const PredictionModel& model, const CascadeSpec& spec, std::span<const double> d,
                              std::span<const double> x, double t_next) {
  const double t = d[spec.source];
  double acc = model.delta(spec.source, t, t_next, d, x);
  const double base = model.predict(d, x);
  for (const auto& f : spec.factors) {
    if (spec.masked(f.coordinate)) continue;
    std::vector<double> dd(d.begin(), d.end()), xx(x.begin(), x.end());
    double v = factor_rank(f, joint_value(f.coordinate, d, x), t);
    set_joint(f.coordinate, f.quantile(v, t_next), dd, xx);
    acc += base - model.predict(dd, xx);
  }
  return acc;
}

double compact_weight(const CompactLaw& law, double d, Formula formula) {
  double dens = law.pdf(d);
  if (!(dens > 0.0) || !std::isfinite(dens))
    throw NumericalError("compact attribute outside the support of its law (density " + std::to_string(dens) + ")");
  double q = norm_quantile(clamp_unit(law.cdf(d)));
  return formula == Formula::exact ? q * norm_pdf(q) / dens : norm_pdf(q) / dens;
}

}  // namespace

void score_draws(const PredictionModel& model, const ProtectedAttribute& attr, const WeightFunction& gamma,
                 std::span<const double> x, Variant variant, Formula formula, ScoredDraws& out) {
  const std::size_t n = out.draws.size();
  const std::size_t m = static_cast<std::size_t>(out.draws.d.cols());
  const std::size_t i = attr.index;
  if (out.y.size() != n || out.weight.size() != n) throw InvalidInput("score_draws: outcomes do not match the draws");
  if (variant == Variant::cascade && !attr.cascade)
    throw InvalidInput("cascade variant needs conditional-quantile slopes");

  std::vector<double> z(n), c(n);
  std::vector<double> d(m);
  auto row = [&](std::size_t r) {
    for (std::size_t j = 0; j < m; ++j) d[j] = out.draws.d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
  };

  switch (attr.spec.kind) {
    case ProtectedKind::continuous:
    case ProtectedKind::compact:
      for (std::size_t r = 0; r < n; ++r) {
        row(r);
        double g = model.partial(i, d, x).value;
        if (variant == Variant::cascade) g += cascade_chain(model, *attr.cascade, d, x);
        double w = attr.spec.kind == ProtectedKind::continuous ? d[i] : compact_weight(attr.spec.compact, d[i], formula);
        z[r] = w * g;
        c[r] = z[r] * out.weight[r];
      }
      break;

    case ProtectedKind::discrete: {
      const DiscreteLaw& law = attr.spec.discrete;
      const std::size_t K = law.size();
      std::vector<double> v(K - 1);
      for (std::size_t k = 0; k + 1 < K; ++k) v[k] = law.cut_weight(k);

      // g at t_from minus g at t_to for the current draw, which sits at t_from
      auto change = [&](double t_from, double t_to) {
        if (variant == Variant::marginal) return model.delta(i, t_from, t_to, d, x);
        if (formula == Formula::published) return cascade_coordinate_sum(model, *attr.cascade, d, x, t_to);
        return model.predict(d, x) - cascade_value(model, *attr.cascade, d, x, t_to);
      };

      std::optional<RankIntegral> G;
      const bool need_rank = formula == Formula::exact && !gamma.is_constant();
      if (need_rank) {
        EmpiricalDistribution dist(out.y);
        G.emplace(gamma, dist);
      }
      const double level = gamma.is_constant() ? gamma(0.5) : 0.0;

      for (std::size_t r = 0; r < n; ++r) {
        row(r);
        const std::size_t k = law.index_of(d[i]);
        const double y = out.y[r];
        double zr = 0.0, cr = 0.0;
        if (formula == Formula::published) {
          if (k + 1 < K) zr = v[k] * change(law.levels[k], law.levels[k + 1]);
          cr = zr * out.weight[r];
        } else {
          const double pk = law.probs[k];
          if (k + 1 < K) {
            // draw moves up across cut k: Delta_k = g(t_k) - g(t_{k+1})
            double dk = change(law.levels[k], law.levels[k + 1]);
            zr += 0.5 * v[k] * dk / pk;
            cr += 0.5 * v[k] / pk * (need_rank ? (*G)(y) - (*G)(y - dk) : level * dk);
          }
          if (k > 0) {
            // draw moves down across cut k-1: Delta_{k-1} = g(t_{k-1}) - g(t_k)
            double dk = -change(law.levels[k], law.levels[k - 1]);
            zr += 0.5 * v[k - 1] * dk / pk;
            cr += 0.5 * v[k - 1] / pk * (need_rank ? (*G)(y + dk) - (*G)(y) : level * dk);
          }
        }
        z[r] = zr;
        c[r] = cr;
      }
      break;
    }
  }
  out.score.push_back(std::move(z));
  out.contribution.push_back(std::move(c));
}

namespace {

bool analytic_available(const SensitivityProblem& p, Variant variant) {
  auto* gb = dynamic_cast<const GaussianBackend*>(p.sampler);
  if (!gb) return false;
  if (p.model->family() == Family::custom || p.model->link() != Link::identity) return false;
  if (!p.model->layout().one_hot.empty()) {
    for (bool oh : p.model->layout().one_hot)
      if (oh) return false;
  }
  for (const auto& a : p.attributes) {
    if (a.spec.kind != ProtectedKind::continuous) return false;
    if (variant == Variant::cascade)
      for (const auto& f : a.cascade->factors)
        if (!a.cascade->masked(f.coordinate) && !f.linear_slope) return false;
  }
  return true;
}

ConditionalTerms analytic_terms(const SensitivityProblem& p, const WeightFunction& gamma, std::span<const double> x,
                                Variant variant) {
  const auto& gb = dynamic_cast<const GaussianBackend&>(*p.sampler);
  const auto mo = gb.linear_moments(*p.model, x);
  const double mass = gamma.integral(0.0, 1.0);
  const double kappa = gamma.normal_moment();
  const double sy = std::sqrt(mo.var_y);
  if (!(sy > 0.0)) throw NumericalError("outcome has zero conditional variance");

  const auto& beta = p.model->coefficients();  // intercept first
  const std::size_t L = p.attributes.size();
  std::vector<double> coef(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& a = p.attributes[l];
    double c = beta[1 + a.index];
    if (variant == Variant::cascade)
      for (const auto& f : a.cascade->factors)
        if (!a.cascade->masked(f.coordinate)) c += beta[1 + f.coordinate] * *f.linear_slope;
    coef[l] = c;
  }

  ConditionalTerms t;
  t.method = Method::analytic;
  t.rho = mo.mean_y * mass + sy * kappa;
  t.gram = Eigen::MatrixXd(L, L);
  t.cross.resize(L);
  t.sensitivity.resize(L);
  t.sensitivity_se.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const auto i = static_cast<Eigen::Index>(p.attributes[l].index);
    double e_dgamma = mo.mean_d(i) * mass + mo.cov_dy(i) / sy * kappa;
    t.sensitivity[l] = coef[l] * e_dgamma;
    t.cross[l] = coef[l] * (mo.mean_y * mo.mean_d(i) + mo.cov_dy(i));
    for (std::size_t k = 0; k < L; ++k) {
      const auto j = static_cast<Eigen::Index>(p.attributes[k].index);
      t.gram(l, k) = coef[l] * coef[k] * (mo.cov_d(i, j) + mo.mean_d(i) * mo.mean_d(j));
    }
  }
  return t;
}

}  // namespace

ConditionalTerms conditional_terms(const SensitivityProblem& problem, const WeightFunction& gamma,
                                   std::span<const double> x, const SensitivityOptions& opts) {
  problem.validate(opts.variant);
  if (x.size() != problem.model->n_other()) throw InvalidInput("covariate vector has the wrong length");

  const bool analytic = analytic_available(problem, opts.variant);
  if (opts.route == Route::analytic && !analytic)
    throw InvalidInput("analytic route needs a gaussian backend, an identity-link model and continuous attributes");
  if (analytic && opts.route != Route::simulation) return analytic_terms(problem, gamma, x, opts.variant);

  const std::size_t n = opts.sim.n_draws;
  if (n < opts.sim.min_draws)
    throw EstimationError("conditional sample of " + std::to_string(n) + " draws is below the minimum of " +
                          std::to_string(opts.sim.min_draws));

  ScoredDraws s;
  s.draws = problem.sampler->draw(x, n, opts.sim.seed);
  if (s.draws.size() != n) throw EstimationError("sampler returned " + std::to_string(s.draws.size()) + " draws");
  s.y.resize(n);
  const std::size_t m = problem.model->n_protected();
  std::vector<double> d(m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) d[j] = s.draws.d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
    s.y[r] = problem.model->predict(d, x) + s.draws.noise(static_cast<Eigen::Index>(r));
    if (!std::isfinite(s.y[r])) throw NumericalError("non-finite outcome in the conditional sample");
  }
  EmpiricalDistribution dist(s.y);
  s.weight = rank_weights(gamma, dist);

  ConditionalTerms t;
  t.method = Method::simulation;
  t.rho = evaluate(gamma, dist);
  const std::size_t L = problem.attributes.size();
  for (const auto& a : problem.attributes) score_draws(*problem.model, a, gamma, x, opts.variant, opts.formula, s);

  t.sensitivity.resize(L);
  t.sensitivity_se.resize(L);
  t.cross.resize(L);
  t.gram = Eigen::MatrixXd(L, L);
  std::vector<double> tmp(n);
  for (std::size_t l = 0; l < L; ++l) {
    t.sensitivity[l] = mean(s.contribution[l]);
    t.sensitivity_se[l] = std_error(s.contribution[l]);
    for (std::size_t r = 0; r < n; ++r) tmp[r] = s.y[r] * s.score[l][r];
    t.cross[l] = mean(tmp);
    for (std::size_t k = l; k < L; ++k) {
      for (std::size_t r = 0; r < n; ++r) tmp[r] = s.score[l][r] * s.score[k][r];
      t.gram(l, k) = t.gram(k, l) = mean(tmp);
    }
  }
  t.scored = std::move(s);
  return t;
}

SensitivityValue sensitivity_at(const SensitivityProblem& problem, const WeightFunction& gamma,
                                std::span<const double> x, const SensitivityOptions& opts, std::size_t attribute) {
  if (attribute >= problem.attributes.size()) throw InvalidInput("attribute index out of range");
  SensitivityProblem one = problem;
  one.attributes = {problem.attributes[attribute]};
  auto t = conditional_terms(one, gamma, x, opts);
  return {t.sensitivity[0], t.sensitivity_se[0], t.method};
}

SensitivityReport sensitivity_report(const SensitivityProblem& problem, const WeightFunction& gamma,
                                     const std::vector<std::vector<double>>& xs, const SensitivityOptions& opts,
                                     std::size_t attribute) {
  if (attribute >= problem.attributes.size()) throw InvalidInput("attribute index out of range");
  SensitivityReport rep;
  rep.protected_index = problem.attributes[attribute].index;
  rep.weight_label = gamma.label();
  rep.variant = opts.variant;
  rep.formula = opts.formula;
  rep.n_draws = opts.sim.n_draws;
  rep.seed = opts.sim.seed;
  rep.kind = sensitivity_kind(problem.attributes[attribute], opts.variant, gamma);
  rep.x = xs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    SensitivityOptions o = opts;
    o.sim.seed = derive_seed(opts.sim.seed, k);
    rep.values.push_back(sensitivity_at(problem, gamma, xs[k], o, attribute));
  }
  return rep;
}

csv::Table SensitivityReport::to_table() const {
  csv::Table t;
  std::size_t p = x.empty() ? 0 : x.front().size();
  for (std::size_t j = 0; j < p; ++j) t.header.push_back(p == 1 ? "x" : "x" + std::to_string(j + 1));
  t.header.insert(t.header.end(), {"sensitivity", "se", "method"});
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::vector<std::string> row;
    for (double v : x[k]) row.push_back(csv::fmt(v));
    row.push_back(csv::fmt(values[k].value));
    row.push_back(csv::fmt(values[k].se));
    row.push_back(to_string(values[k].method));
    t.rows.push_back(std::move(row));
  }
  return t;
}

nlohmann::ordered_json SensitivityReport::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["protected_index"] = protected_index;
  j["weight"] = weight_label;
  j["variant"] = to_string(variant);
  j["formula"] = to_string(formula);
  j["n_draws"] = n_draws;
  j["seed"] = seed;
  auto& pts = j["points"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < values.size(); ++k)
    pts.push_back({{"x", x[k]}, {"value", values[k].value}, {"se", values[k].se},
                   {"method", to_string(values[k].method)}});
  return j;
}

double bernoulli_sensitivity(double p, double delta_g, Formula formula) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("Bernoulli mass must lie in (0,1)");
  double v = DiscreteLaw::bernoulli(p).cut_weight(0);
  return formula == Formula::published ? v * (1.0 - p) * delta_g : v * delta_g;
}

Estimate plugin_sensitivity(std::span<const double> y, std::span<const double> d_dg, const WeightFunction& gamma) {
  if (y.size() != d_dg.size() || y.empty()) throw InvalidInput("plugin_sensitivity: size mismatch");
  EmpiricalDistribution dist(y);
  auto w = rank_weights(gamma, dist);
  std::vector<double> c(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) c[r] = d_dg[r] * w[r];
  return {mean(c), std_error(c)};
}

}  // namespace mfair
