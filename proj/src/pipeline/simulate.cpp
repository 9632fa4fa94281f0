#include "mfair/pipeline/simulate.hpp"

#include <cmath>

#include "mfair/csv.hpp"
#include "mfair/errors.hpp"

namespace mfair::pipeline {

StudySetup study_setup(const LinearGaussianParams& p) {
  auto backend = GaussianBackend::bivariate(p.mu_x, p.mu_d, p.sd_x, p.sd_d, p.tau, p.noise_sd);
  FeatureLayout layout = FeatureLayout::plain(1, 1);
  layout.names = {"D", "X"};
  auto model = PredictionModel::linear({p.b0, p.bd, p.bx}, layout);
  ProtectedAttribute attr;
  attr.index = 0;
  attr.spec = ProtectedSpec::continuous();
  CascadeSpec cs;
  cs.source = 0;
  cs.factors.push_back(CascadeFactor::gaussian_linear(1, p.mu_x, p.cascade_slope(), p.mu_d,
                                                      p.sd_x * std::sqrt(1.0 - p.tau * p.tau)));
  attr.cascade = cs;
  return {std::move(backend), std::move(model), std::move(attr)};
}

double evaluate_subset(const WeightFunction& gamma, std::span<const double> y, const std::vector<std::size_t>& order,
                       const std::vector<bool>& keep) {
  std::size_t n = 0;
  for (std::size_t j : order) n += keep[j] ? 1 : 0;
  if (n == 0) throw InvalidInput("empty subset");
  KahanSum acc;
  std::size_t seen = 0;
  double lo = 0.0;
  for (std::size_t j : order) {
    if (!keep[j]) continue;
    ++seen;
    double hi = seen == n ? 1.0 : static_cast<double>(seen) / static_cast<double>(n);
    acc.add(y[j] * gamma.integral(lo, hi));
    lo = hi;
  }
  return acc.value();
}

namespace {

double subset_mean(const std::vector<double>& v, const std::vector<bool>& keep) {
  KahanSum s;
  std::size_t n = 0;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (keep[j]) {
      s.add(v[j]);
      ++n;
    }
  return s.value() / static_cast<double>(n);
}

struct Moments {
  std::vector<double> zz, yz;
};

Moments products(const ScoredDraws& s) {
  Moments m;
  const auto& z = s.score.at(0);
  m.zz.resize(z.size());
  m.yz.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    m.zz[j] = z[j] * z[j];
    m.yz[j] = s.y[j] * z[j];
  }
  return m;
}

std::vector<std::size_t> sort_order(const std::vector<double>& y) {
  EmpiricalDistribution dist(y);
  return dist.order();
}

}  // namespace

Estimate simulated_fair(const ConditionalTerms& terms, const WeightFunction& gamma, std::size_t batches) {
  if (!terms.scored) throw InvalidInput("simulated_fair needs simulated terms");
  if (terms.sensitivity.size() != 1) throw InvalidInput("simulated_fair handles one attribute");
  const auto& s = *terms.scored;
  auto pr = products(s);
  auto order = sort_order(s.y);
  double eta = fair_multiplier(terms.sensitivity[0], terms.gram(0, 0));
  Estimate e;
  e.value = terms.rho - eta * terms.cross[0];
  e.se = jackknife(s.y.size(), batches, [&](const std::vector<bool>& keep) {
           double r = evaluate_subset(gamma, s.y, order, keep);
           double h = subset_mean(s.contribution[0], keep) / subset_mean(pr.zz, keep);
           return r - h * subset_mean(pr.yz, keep);
         }).se;
  return e;
}

namespace {

struct Point {
  double analytic = 0.0, mc = 0.0, se = 0.0;
};

void push(std::vector<std::string>& row, const Point& p) {
  row.push_back(csv::fmt(p.analytic));
  row.push_back(csv::fmt(p.mc));
  row.push_back(csv::fmt(p.se));
}

void header(std::vector<std::string>& h, const std::string& name) {
  h.push_back(name);
  h.push_back(name + "_mc");
  h.push_back(name + "_se");
}

}  // namespace

SimulateOutput simulate(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto& sc = cfg.simulate;
  const auto& p = sc.params;
  auto setup = study_setup(p);
  const auto xs = sc.grid.points();
  const auto ev = WeightFunction::expected_value();
  const auto es = WeightFunction::expected_shortfall(sc.es_level);

  SensitivityProblem prob{&setup.model, &setup.backend, {setup.attribute}};

  csv::Table strat, adj, rules, sens;
  strat.header = {"x"};
  for (const char* n : {"P_U", "P_DF", "P_MF_EV", "P_MF_ES"}) header(strat.header, n);
  adj.header = {"x"};
  header(adj.header, "one_minus_c");
  header(adj.header, "one_minus_cbar");
  rules.header = {"x"};
  sens.header = {"x"};
  for (const char* r : {"ev", "es"})
    for (const char* v : {"marginal", "cascade"}) {
      header(rules.header, std::string(v) + "_" + r);
      header(sens.header, std::string(v) + "_" + r);
    }

  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double xv = xs[k];
    const std::vector<double> x{xv};
    const std::uint64_t seed = derive_seed(cfg.seed, k);

    SensitivityOptions sa;
    sa.route = Route::analytic;
    sa.formula = cfg.formula;
    SensitivityOptions sm = sa;
    sm.route = Route::simulation;
    sm.sim.n_draws = sc.n_draws;
    sm.sim.seed = seed;

    // [gamma][variant]
    Point fair[2][2], sensv[2][2];
    double eta_a[2] = {0, 0}, eta_m[2] = {0, 0}, eta_se[2] = {0, 0};
    double rho_ev_mc = 0.0, rho_ev_se = 0.0, mean_d = 0.0;
    for (int g = 0; g < 2; ++g) {
      const auto& gamma = g == 0 ? ev : es;
      for (int v = 0; v < 2; ++v) {
        sa.variant = sm.variant = v == 0 ? Variant::marginal : Variant::cascade;
        FairOptions fa;
        fa.sens = sa;
        auto ra = fair_rule(prob, gamma, x, fa);
        auto tm = conditional_terms(prob, gamma, x, sm);
        auto fm = simulated_fair(tm, gamma, sc.batches);
        fair[g][v] = {ra.value, fm.value, fm.se};
        sensv[g][v] = {ra.sensitivity[0], tm.sensitivity[0], tm.sensitivity_se[0]};
        if (v == 0) {
          eta_a[g] = ra.eta[0];
          const auto& s = *tm.scored;
          auto pr = products(s);
          eta_m[g] = tm.sensitivity[0] / tm.gram(0, 0);
          std::vector<double> dcol(s.draws.d.data(), s.draws.d.data() + s.draws.d.rows());
          mean_d = mean(dcol);
          eta_se[g] = jackknife(s.y.size(), sc.batches, [&](const std::vector<bool>& keep) {
                        return subset_mean(s.contribution[0], keep) / subset_mean(pr.zz, keep) * p.bd *
                               subset_mean(dcol, keep);
                      }).se;
          if (g == 0) {
            rho_ev_mc = tm.rho;
            rho_ev_se = jackknife(s.y.size(), sc.batches, [&](const std::vector<bool>& keep) {
                          return subset_mean(s.y, keep);
                        }).se;
          }
        }
      }
    }

    const double m = p.cond_mean_d(xv);
    Point pu{p.b0 + p.bx * xv + p.bd * m, rho_ev_mc, rho_ev_se};
    auto marg = setup.backend.draw_marginal(sc.n_marginal, derive_seed(cfg.seed, 100000 + k));
    std::vector<double> gdf(marg.size());
    for (std::size_t r = 0; r < marg.size(); ++r) {
      double d = marg.d(static_cast<Eigen::Index>(r), 0);
      gdf[r] = setup.model.predict(std::span<const double>(&d, 1), x);
    }
    Point pdf{p.b0 + p.bx * xv + p.bd * p.mu_d, mean(gdf),
              jackknife(gdf.size(), sc.batches, [&](const std::vector<bool>& keep) { return subset_mean(gdf, keep); })
                  .se};

    std::vector<std::string> row{csv::fmt(xv)};
    push(row, pu);
    push(row, pdf);
    push(row, fair[0][0]);
    push(row, fair[1][0]);
    strat.rows.push_back(row);

    row = {csv::fmt(xv)};
    for (int g = 0; g < 2; ++g)
      push(row, {1.0 - eta_a[g] * p.bd * m, 1.0 - eta_m[g] * p.bd * mean_d, eta_se[g]});
    adj.rows.push_back(row);

    row = {csv::fmt(xv)};
    for (int g = 0; g < 2; ++g)
      for (int v = 0; v < 2; ++v) push(row, fair[g][v]);
    rules.rows.push_back(row);

    row = {csv::fmt(xv)};
    for (int g = 0; g < 2; ++g)
      for (int v = 0; v < 2; ++v) push(row, sensv[g][v]);
    sens.rows.push_back(row);
  }

  ensure_dir(out_dir);
  SimulateOutput out;
  out.hash = cfg.hash();
  auto write = [&](const std::string& stem, const csv::Table& t) {
    std::string name = stem + "_" + out.hash + ".csv";
    csv::write_file(out_dir + "/" + name, t);
    out.files.push_back(name);
  };
  write("strategies", strat);
  write("adjustment", adj);
  write("fair_rules", rules);
  write("sensitivities", sens);

  nlohmann::ordered_json man;
  man["command"] = "simulate";
  man["config_hash"] = out.hash;
  man["es_level"] = sc.es_level;
  man["grid_points"] = xs.size();
  man["files"] = out.files;
  man["config"] = cfg.to_json();
  std::string name = "manifest_" + out.hash + ".json";
  write_text(out_dir + "/" + name, man.dump(2) + "\n");
  out.files.push_back(name);
  return out;
}

}  // namespace mfair::pipeline
