#include "mfair/pipeline/audit.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair::pipeline {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double train_fraction,
                                                                         std::uint64_t seed) {
  if (n < 2) throw InvalidInput("split needs at least two rows");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidInput("train fraction must lie in (0,1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t j = 0; j < n; ++j) idx[j] = j;
  // Fisher-Yates on our own uniform stream so the split does not depend on
  // the standard library's shuffle
  Rng rng(seed);
  for (std::size_t j = n - 1; j > 0; --j) {
    auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(j + 1));
    std::swap(idx[j], idx[std::min(k, j)]);
  }
  auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

nlohmann::ordered_json AuditModels::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "mfair.audit_models";
  j["version"] = 1;
  j["g"] = g.to_json();
  j["protected_levels"] = law.levels;
  j["protected_probs"] = law.probs;
  j["es_level"] = es_level;
  j["backend"] = backend.to_json();
  if (tail) {
    j["tail"] = {{"alpha", tail->alpha()},
                 {"exceedances", tail->exceedances()},
                 {"quantile", tail->quantile_model().to_json()},
                 {"tail", tail->tail_model().to_json()}};
  }
  return j;
}

namespace {

nlohmann::ordered_json summary_json(const Summary& s) {
  return {{"n", s.n}, {"min", s.min}, {"q25", s.q25}, {"q50", s.q50}, {"q75", s.q75}, {"max", s.max}, {"mean", s.mean}};
}

std::vector<std::pair<std::string, Summary>> by_group(const std::vector<std::string>& groups,
                                                      const std::vector<double>& v) {
  std::map<std::string, std::vector<double>> m;
  for (std::size_t j = 0; j < v.size(); ++j) m[groups[j]].push_back(v[j]);
  std::vector<std::pair<std::string, Summary>> out;
  for (const auto& [k, vals] : m) out.emplace_back(k, summarize(vals));
  return out;
}

Optimizer optimizer_of(const std::string& s) { return s == "irls" ? Optimizer::irls : Optimizer::adam; }

}  // namespace

std::vector<StrategyStats> strategy_stats(const std::vector<std::pair<std::string, std::vector<double>>>& columns,
                                          const std::vector<double>& observed, const std::vector<double>& loss,
                                          const std::vector<double>& exposure, std::size_t n_bins) {
  std::vector<StrategyStats> out;
  for (const auto& [name, v] : columns) {
    StrategyStats s;
    s.name = name;
    s.summary = summarize(v);
    s.gini = gini(v, loss, exposure).index;
    s.bins = quantile_bins(v, observed, exposure, n_bins);
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::ordered_json coefficient_recovery(const std::vector<double>& fitted, const std::vector<double>& truth,
                                            const std::vector<std::string>& names) {
  if (fitted.size() != truth.size() || names.size() + 1 != truth.size())
    throw InvalidInput("coefficient recovery: length mismatch");
  double num = 0.0, den = 0.0, worst = 0.0;
  std::string worst_name;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t k = 1; k < truth.size(); ++k) {
    double e = fitted[k] - truth[k];
    num += e * e;
    den += truth[k] * truth[k];
    if (std::abs(e) > worst) {
      worst = std::abs(e);
      worst_name = names[k - 1];
    }
    per.push_back({{"name", names[k - 1]}, {"truth", truth[k]}, {"fitted", fitted[k]}});
  }
  nlohmann::ordered_json j;
  j["relative_l2"] = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  j["max_abs_error"] = worst;
  j["max_abs_error_at"] = worst_name;
  j["intercept_truth"] = truth[0];
  j["intercept_fitted"] = fitted[0];
  j["coefficients"] = per;
  return j;
}

AuditReport audit(const RunConfig& cfg, const EncodedData& data, const std::optional<PortfolioTruth>& truth) {
  cfg.validate();
  const auto& ac = cfg.audit;
  auto [train_idx, test_idx] = split_rows(data.size(), ac.train_fraction, ac.split_seed);
  const EncodedData train = data.rows(train_idx), test = data.rows(test_idx);
  const Eigen::MatrixXd Xtr = train.covariates();
  const Eigen::VectorXd dtr = train.protected_column();

  FitOptions fo;
  fo.optimizer = optimizer_of(ac.optimizer);
  PredictionModel g;
  if (ac.step1 == "truth") {
    if (!truth) throw InvalidInput("audit.step1 = truth needs generator coefficients");
    if (ac.age_bins != generator_age_bins()) throw InvalidInput("audit.step1 = truth needs the generator's age bins");
    g = truth->model(ac.tweedie_power);
  } else {
    g = fit_glm(train.dataset(), Family::tweedie, Link::log, ac.tweedie_power, fo);
  }

  double pi1 = dtr.mean();
  if (!(pi1 > 0.0 && pi1 < 1.0)) throw InvalidInput("audit: the protected attribute takes a single level in training");
  DiscreteLaw law({0.0, 1.0}, {1.0 - pi1, pi1});

  std::vector<std::string> xnames(data.layout.names.begin() + 1, data.layout.names.end());
  AuditModels models{g, law, RegressionBackend(FeatureMap::identity(xnames)), std::nullopt, ac.es_level};
  models.backend.fit_class_probs(0, Xtr, dtr, law, Eigen::VectorXd::Ones(dtr.size()));
  models.tail = ConditionalTail::fit(FeatureMap::identity(xnames), Xtr, train.y, train.w, ac.es_level);

  const double v = law.cut_weight(0);
  const double alpha = ac.es_level;
  const bool exact = cfg.formula == Formula::exact;
  // per-row factor of Z at each level: Z_k = zf[k] * Delta
  const double zf[2] = {exact ? 0.5 * v / law.probs[0] : v, exact ? 0.5 * v / law.probs[1] : 0.0};

  auto level_predictions = [&](const Eigen::MatrixXd& X, Eigen::Index r, double& g0, double& g1) {
    std::vector<double> x(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index c = 0; c < X.cols(); ++c) x[static_cast<std::size_t>(c)] = X(r, c);
    double d0 = 0.0, d1 = 1.0;
    g0 = g.predict(std::span<const double>(&d0, 1), x);
    g1 = g.predict(std::span<const double>(&d1, 1), x);
    return x;
  };

  // ES sensitivity regression on the training rows
  {
    const auto n = Xtr.rows();
    Eigen::VectorXd target(n);
    RegressorSpec spec;
    for (Eigen::Index r = 0; r < n; ++r) {
      double g0, g1;
      auto x = level_predictions(Xtr, r, g0, g1);
      const double var = models.tail->cond_var(x), y = train.y[r], delta = g0 - g1;
      auto G = [&](double t) { return std::max(t - var, 0.0) / (1.0 - alpha); };
      const bool female = dtr[r] == 1.0;
      if (exact) {
        target[r] = female ? 0.5 * v / law.probs[1] * (G(y + delta) - G(y))
                           : 0.5 * v / law.probs[0] * (G(y) - G(y - delta));
      } else {
        target[r] = (!female && y > var) ? 1.0 : 0.0;  // P(D = t_1, Y > VaR | x)
      }
    }
    if (exact)
      spec = {Family::tweedie, Link::log, ac.tweedie_power, fo};
    else
      spec = {Family::binomial, Link::logit, 0.0, {std::nullopt, 0, 0.0, 0.01, 1e-6}};
    bool all_zero = (target.array() == 0.0).all();
    if (all_zero)
      models.backend.set("sens_es", PredictionModel::glm(Family::gaussian, Link::identity, 0.0,
                                                         std::vector<double>(xnames.size() + 1, 0.0),
                                                         [&] {
                                                           auto l = FeatureLayout::plain(0, xnames.size());
                                                           l.names = xnames;
                                                           return l;
                                                         }()));
    else
      models.backend.fit("sens_es", Xtr, target, train.w, spec);
  }

  AuditReport rep{std::move(models), {}, {}, {}, {}, {}, {}, {}, 0, 0.0, {}, {}, {}};
  const auto& M = rep.models;
  const Eigen::MatrixXd Xte = test.covariates();
  std::vector<double> pu, pdf, pev, pes, adj_ev, adj_es, sens_ev, sens_es;
  std::size_t positive = 0;
  for (Eigen::Index r = 0; r < Xte.rows(); ++r) {
    double g0, g1;
    auto x = level_predictions(Xte, r, g0, g1);
    const double q1 = M.backend.cond_class_prob(0, 1, x), q0 = 1.0 - q1;
    const double delta = g0 - g1;
    const double z0 = zf[0] * delta, z1 = zf[1] * delta;
    const double ez2 = q0 * z0 * z0 + q1 * z1 * z1;
    const double eyz = q0 * g0 * z0 + q1 * g1 * z1;
    const double s_ev = q0 * z0 + q1 * z1;
    double s_es = M.backend.predict("sens_es", x);
    if (!exact) s_es *= v * delta / (1.0 - alpha);
    const double es = M.tail->cond_es(x);

    AuditRow row;
    auto& d = row.decision;
    d.x = x;
    d.unaware = q0 * g0 + q1 * g1;
    d.discr_free = law.probs[0] * g0 + law.probs[1] * g1;
    d.denom = ez2;
    d.sens = s_ev;
    try {
      d.fair_ev = d.unaware - fair_multiplier(s_ev, ez2) * eyz;
      d.fair_es = es - fair_multiplier(s_es, ez2) * eyz;
    } catch (const DegenerateDenominator&) {
      d.fair_ev = d.unaware;
      d.fair_es = es;
      d.flags = "degenerate";
      ++rep.degenerate_rows;
    }
    row.es = es;
    row.sens_es = s_es;
    row.age_group = test.age_group[static_cast<std::size_t>(r)];
    if (d.adjustment() > 0.0) ++positive;

    pu.push_back(d.unaware);
    pdf.push_back(d.discr_free);
    pev.push_back(d.fair_ev);
    pes.push_back(d.fair_es);
    adj_ev.push_back(d.adjustment());
    adj_es.push_back(es - d.fair_es);
    sens_ev.push_back(s_ev);
    sens_es.push_back(s_es);
    rep.rows.push_back(std::move(row));
  }

  rep.exposure.assign(test.w.data(), test.w.data() + test.w.size());
  rep.loss.assign(test.loss.data(), test.loss.data() + test.loss.size());
  rep.observed.assign(test.y.data(), test.y.data() + test.y.size());
  rep.strategies = strategy_stats({{"P_U", pu}, {"P_DF", pdf}, {"P_MF_EV", pev}, {"P_MF_ES", pes}}, rep.observed,
                                  rep.loss, rep.exposure, ac.n_bins);
  rep.adjustment_ev = summarize(adj_ev);
  rep.adjustment_es = summarize(adj_es);
  rep.positive_share = static_cast<double>(positive) / static_cast<double>(rep.rows.size());
  rep.age_sensitivity_ev = by_group(test.age_group, sens_ev);
  rep.age_sensitivity_es = by_group(test.age_group, sens_es);
  if (truth && ac.step1 == "fit" && ac.age_bins == generator_age_bins())
    rep.recovery = coefficient_recovery(g.coefficients(), truth->coef, truth->names);
  return rep;
}

nlohmann::ordered_json AuditReport::to_json() const {
  nlohmann::ordered_json j;
  j["test_rows"] = rows.size();
  j["degenerate_rows"] = degenerate_rows;
  j["positive_adjustment_share"] = positive_share;
  j["protected_share_train"] = models.law.probs[1];
  auto& st = j["strategies"] = nlohmann::ordered_json::array();
  for (const auto& s : strategies)
    st.push_back({{"name", s.name}, {"gini", s.gini}, {"merged_bins", s.bins.merged}, {"summary", summary_json(s.summary)}});
  j["adjustment_ev"] = summary_json(adjustment_ev);
  j["adjustment_es"] = summary_json(adjustment_es);
  auto age = [](const std::vector<std::pair<std::string, Summary>>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& [k, s] : v) a.push_back({{"age_group", k}, {"summary", summary_json(s)}});
    return a;
  };
  j["age_sensitivity_ev"] = age(age_sensitivity_ev);
  j["age_sensitivity_es"] = age(age_sensitivity_es);
  j["step1_fit"] = {{"optimizer", models.g.diagnostics.optimizer},
                    {"iterations", models.g.diagnostics.iterations},
                    {"gradient_norm", models.g.diagnostics.gradient_norm},
                    {"deviance", models.g.diagnostics.deviance},
                    {"converged", models.g.diagnostics.converged}};
  if (models.tail) j["tail_exceedances"] = models.tail->exceedances();
  if (recovery) j["recovery"] = *recovery;
  return j;
}

}  // namespace mfair::pipeline
