#include "mfair/fairness.hpp"

#include <cmath>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

double fair_multiplier(double s, double denom, double floor) {
  if (!std::isfinite(s) || !std::isfinite(denom)) throw NumericalError("non-finite fair-rule ingredient");
  if (!(denom > floor))
    throw DegenerateDenominator("E[Z^2|x] = " + std::to_string(denom) + " is not above the floor " +
                                std::to_string(floor) + "; the protected attribute has no effect through g");
  return s / denom;
}

Eigen::VectorXd solve_multipliers(const Eigen::MatrixXd& gram, const std::vector<double>& s, double floor,
                                  double* condition) {
  const auto L = gram.rows();
  if (gram.cols() != L || static_cast<std::size_t>(L) != s.size()) throw InvalidInput("multiplier system has bad shape");
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(s.data(), L);
  if (L == 1) {
    if (condition) *condition = 1.0;
    return Eigen::VectorXd::Constant(1, fair_multiplier(s[0], gram(0, 0), floor));
  }
  for (Eigen::Index l = 0; l < L; ++l)
    if (!(gram(l, l) > floor))
      throw DegenerateDenominator("attribute " + std::to_string(l) + " has E[Z^2|x] below the floor");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
  const auto& sv = svd.singularValues();
  double cond = sv(L - 1) > 0.0 ? sv(0) / sv(L - 1) : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  if (!(sv(L - 1) > 1e-14 * sv(0))) throw NoFairRule("multi-marginal system is singular");
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(gram);
  Eigen::VectorXd eta = lu.solve(rhs);
  if (!eta.allFinite()) throw NoFairRule("multi-marginal system has no finite solution");
  return eta;
}

namespace {

FairRule build(const SensitivityProblem& problem, const WeightFunction& gamma, std::span<const double> x,
               const FairOptions& opts) {
  auto t = conditional_terms(problem, gamma, x, opts.sens);
  FairRule r;
  r.weight_label = gamma.label();
  for (const auto& a : problem.attributes) r.protected_index.push_back(a.index);
  r.variant = opts.sens.variant;
  r.formula = opts.sens.formula;
  r.method = t.method;
  r.x.assign(x.begin(), x.end());
  r.rho = t.rho;
  r.sensitivity = t.sensitivity;
  r.sensitivity_se = t.sensitivity_se;
  r.gram = t.gram;
  r.cross = t.cross;

  Eigen::VectorXd eta = solve_multipliers(t.gram, t.sensitivity, opts.floor, &r.condition);
  r.ill_conditioned = r.condition > opts.max_condition;
  r.eta.assign(eta.data(), eta.data() + eta.size());
  double corr = 0.0;
  for (std::size_t l = 0; l < r.eta.size(); ++l) corr += r.eta[l] * t.cross[l];
  r.value = r.rho - corr;
  if (!std::isfinite(r.value)) throw NumericalError("fair decision is not finite");

  const std::size_t L = r.eta.size();
  r.residual.assign(L, 0.0);
  r.residual_se.assign(L, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    double res = t.sensitivity[l];
    for (std::size_t k = 0; k < L; ++k) res -= r.eta[k] * t.gram(l, k);
    r.residual[l] = res;
  }
  if (t.scored) {
    const auto& s = *t.scored;
    const std::size_t n = s.y.size();
    std::vector<double> tmp(n);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t j = 0; j < n; ++j) {
        double adj = 0.0;
        for (std::size_t k = 0; k < L; ++k) adj += r.eta[k] * s.score[k][j];
        tmp[j] = s.contribution[l][j] - s.score[l][j] * adj;
      }
      r.residual_se[l] = std_error(tmp);
    }
    if (opts.keep_draws) r.scored = std::move(t.scored);
  }
  return r;
}

}  // namespace

FairRule fair_rule(const SensitivityProblem& problem, const WeightFunction& gamma, std::span<const double> x,
                   const FairOptions& opts, std::size_t attribute) {
  if (attribute >= problem.attributes.size()) throw InvalidInput("attribute index out of range");
  SensitivityProblem one = problem;
  one.attributes = {problem.attributes[attribute]};
  return build(one, gamma, x, opts);
}

FairRule multi_marginal_rule(const SensitivityProblem& problem, const WeightFunction& gamma, std::span<const double> x,
                             const FairOptions& opts) {
  return build(problem, gamma, x, opts);
}

std::vector<double> fair_weight(const FairRule& rule) {
  if (!rule.scored) throw InvalidInput("fair_weight needs a simulated rule with kept draws");
  const auto& s = *rule.scored;
  std::vector<double> w = s.weight;
  for (std::size_t l = 0; l < rule.eta.size(); ++l)
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= rule.eta[l] * s.score[l][j];
  return w;
}

nlohmann::ordered_json FairRule::to_json() const {
  nlohmann::ordered_json j;
  j["weight"] = weight_label;
  j["protected_index"] = protected_index;
  j["variant"] = to_string(variant);
  j["formula"] = to_string(formula);
  j["method"] = to_string(method);
  j["x"] = x;
  j["rho"] = rho;
  j["fair"] = value;
  j["correction"] = correction();
  j["sensitivity"] = sensitivity;
  j["sensitivity_se"] = sensitivity_se;
  std::vector<std::vector<double>> g(static_cast<std::size_t>(gram.rows()));
  for (Eigen::Index a = 0; a < gram.rows(); ++a)
    for (Eigen::Index b = 0; b < gram.cols(); ++b) g[static_cast<std::size_t>(a)].push_back(gram(a, b));
  j["gram"] = g;
  j["cross"] = cross;
  j["eta"] = eta;
  j["condition"] = condition;
  j["ill_conditioned"] = ill_conditioned;
  j["residual"] = residual;
  j["residual_se"] = residual_se;
  return j;
}

namespace {

double discrimination_free(const SensitivityProblem& problem, std::span<const double> x, const StrategyOptions& opts) {
  const auto& model = *problem.model;
  const std::size_t m = model.n_protected();
  if (m == 1 && problem.attributes.size() == 1 && problem.attributes[0].spec.kind == ProtectedKind::discrete) {
    const auto& law = problem.attributes[0].spec.discrete;
    double acc = 0.0;
    for (std::size_t k = 0; k < law.size(); ++k) {
      double d = law.levels[k];
      acc += law.probs[k] * model.predict(std::span<const double>(&d, 1), x);
    }
    return acc;
  }
  auto* gb = dynamic_cast<const GaussianBackend*>(problem.sampler);
  if (gb && model.family() != Family::custom && model.link() == Link::identity)
    return gb->marginal_linear_moments(model, x).mean_y;
  auto s = problem.sampler->draw_marginal(opts.n_marginal, derive_seed(opts.fair.sens.sim.seed, 0xdf));
  std::vector<double> d(m), g(s.size());
  for (std::size_t r = 0; r < s.size(); ++r) {
    for (std::size_t j = 0; j < m; ++j) d[j] = s.d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
    g[r] = model.predict(d, x);
  }
  return mean(g);
}

}  // namespace

Decision strategies(const SensitivityProblem& problem, std::span<const double> x, const StrategyOptions& opts) {
  Decision dec;
  dec.x.assign(x.begin(), x.end());
  const auto ev = WeightFunction::expected_value();
  const auto es = WeightFunction::expected_shortfall(opts.es_level);
  FairOptions fo = opts.fair;
  fo.keep_draws = false;

  try {
    auto r = multi_marginal_rule(problem, ev, x, fo);
    dec.unaware = r.rho;
    dec.fair_ev = r.value;
    dec.denom = r.gram(0, 0);
    dec.sens = r.sensitivity[0];
    if (r.ill_conditioned) dec.flags += "ill_conditioned;";
  } catch (const DegenerateDenominator&) {
    auto t = conditional_terms(problem, ev, x, fo.sens);
    dec.unaware = dec.fair_ev = t.rho;
    dec.denom = t.gram(0, 0);
    dec.sens = t.sensitivity[0];
    dec.flags += "degenerate_ev;";
  }
  try {
    dec.fair_es = multi_marginal_rule(problem, es, x, fo).value;
  } catch (const DegenerateDenominator&) {
    dec.fair_es = conditional_terms(problem, es, x, fo.sens).rho;
    dec.flags += "degenerate_es;";
  }
  dec.discr_free = discrimination_free(problem, x, opts);
  if (!dec.flags.empty()) dec.flags.pop_back();
  return dec;
}

csv::Table decision_table(const std::vector<Decision>& rows, const std::vector<std::string>& x_names) {
  csv::Table t;
  t.header.push_back("id");
  t.header.insert(t.header.end(), x_names.begin(), x_names.end());
  t.header.insert(t.header.end(), {"P_U", "P_DF", "P_MF_EV", "P_MF_ES", "adjustment", "denom", "sens", "flags"});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.x.size() != x_names.size()) throw InvalidInput("decision row has the wrong number of covariates");
    std::vector<std::string> row{std::to_string(k + 1)};
    for (double v : r.x) row.push_back(csv::fmt(v));
    for (double v : {r.unaware, r.discr_free, r.fair_ev, r.fair_es, r.adjustment(), r.denom, r.sens})
      row.push_back(csv::fmt(v));
    row.push_back(r.flags);
    t.rows.push_back(std::move(row));
  }
  return t;
}

double LinearGaussianParams::cond_mean_d(double x) const { return mu_d + tau * sd_d / sd_x * (x - mu_x); }
double LinearGaussianParams::cond_var_d() const { return sd_d * sd_d * (1.0 - tau * tau); }
double LinearGaussianParams::cascade_slope() const { return tau * sd_x / sd_d; }

double LinearGaussianParams::c(double x) const {
  double m = cond_mean_d(x);
  return m * m / (cond_var_d() + m * m);
}

namespace {

struct Pieces {
  double mean_y, sd_y, e_dgamma, e_yd, e_d2, rho;
};

Pieces pieces(const LinearGaussianParams& p, const WeightFunction& gamma, double x) {
  if (!(p.sd_d > 0.0 && p.sd_x > 0.0 && std::abs(p.tau) < 1.0 && p.noise_sd >= 0.0))
    throw InvalidInput("gaussian-linear parameters out of range");
  const double m = p.cond_mean_d(x), v = p.cond_var_d();
  const double mass = gamma.integral(0.0, 1.0), kappa = gamma.normal_moment();
  Pieces r;
  r.mean_y = p.b0 + p.bx * x + p.bd * m;
  r.sd_y = std::sqrt(p.bd * p.bd * v + p.noise_sd * p.noise_sd);
  if (!(r.sd_y > 0.0)) throw NumericalError("outcome has zero conditional variance");
  r.e_dgamma = m * mass + p.bd * v / r.sd_y * kappa;
  r.e_yd = r.mean_y * m + p.bd * v;
  r.e_d2 = v + m * m;
  r.rho = r.mean_y * mass + r.sd_y * kappa;
  return r;
}

}  // namespace

double closed_form_risk(const LinearGaussianParams& p, const WeightFunction& gamma, double x) {
  return pieces(p, gamma, x).rho;
}

double closed_form_sensitivity(const LinearGaussianParams& p, const WeightFunction& gamma, double x, Variant variant) {
  auto q = pieces(p, gamma, x);
  double coef = p.bd + (variant == Variant::cascade ? p.bx * p.cascade_slope() : 0.0);
  return coef * q.e_dgamma;
}

double closed_form_marginal_fair(const LinearGaussianParams& p, const WeightFunction& gamma, double x) {
  if (gamma.is_constant()) return gamma(0.5) * (p.b0 + p.bx * x) * (1.0 - p.c(x));
  auto q = pieces(p, gamma, x);
  return q.rho - q.e_dgamma * q.e_yd / q.e_d2;
}

double cascade_fair_closed_form(const LinearGaussianParams& p, const WeightFunction& gamma, double x) {
  // The cascade score is (bd + bx s) D: the coefficient cancels between the
  // multiplier and the cross term, leaving the marginal rule.
  double coef = p.bd + p.bx * p.cascade_slope();
  if (coef == 0.0) throw DegenerateDenominator("cascade score vanishes identically");
  auto q = pieces(p, gamma, x);
  double eta = coef * q.e_dgamma / (coef * coef * q.e_d2);
  return q.rho - eta * coef * q.e_yd;
}

}  // namespace mfair
