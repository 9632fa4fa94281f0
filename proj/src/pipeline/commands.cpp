#include "mfair/pipeline/commands.hpp"

#include <memory>

#include "mfair/errors.hpp"
#include "mfair/pipeline/audit.hpp"
#include "mfair/pipeline/portfolio.hpp"
#include "mfair/pipeline/simulate.hpp"

namespace mfair::pipeline {

namespace {

struct Writer {
  std::string dir;
  RunOutput out;

  Writer(const RunConfig& cfg, std::string d) : dir(std::move(d)) {
    ensure_dir(dir);
    out.hash = cfg.hash();
  }
  std::string name(const std::string& stem, const std::string& ext) const { return stem + "_" + out.hash + ext; }
  void table(const std::string& stem, const csv::Table& t) {
    auto n = name(stem, ".csv");
    csv::write_file(dir + "/" + n, t);
    out.files.push_back(n);
  }
  void json(const std::string& stem, const nlohmann::ordered_json& j) {
    auto n = name(stem, ".json");
    write_text(dir + "/" + n, j.dump(2) + "\n");
    out.files.push_back(n);
  }
};

csv::Table summary_table(const std::vector<StrategyStats>& stats) {
  csv::Table t;
  t.header = {"strategy", "n", "min", "q25", "q50", "q75", "max", "mean", "gini"};
  for (const auto& s : stats) {
    const auto& m = s.summary;
    t.rows.push_back({s.name, std::to_string(m.n), csv::fmt(m.min), csv::fmt(m.q25), csv::fmt(m.q50),
                      csv::fmt(m.q75), csv::fmt(m.max), csv::fmt(m.mean), csv::fmt(s.gini)});
  }
  return t;
}

csv::Table bins_table(const std::vector<StrategyStats>& stats) {
  csv::Table t;
  t.header = {"strategy", "bin", "rows", "exposure", "predicted", "observed"};
  for (const auto& s : stats) {
    auto b = s.bins.to_table();
    for (auto& r : b.rows) {
      r.insert(r.begin(), s.name);
      t.rows.push_back(std::move(r));
    }
  }
  return t;
}

csv::Table lorenz_table(const std::vector<std::pair<std::string, std::vector<double>>>& cols,
                        const std::vector<double>& loss, const std::vector<double>& exposure) {
  csv::Table t;
  t.header = {"strategy", "exposure_share", "loss_share"};
  for (const auto& [name, v] : cols) {
    auto g = gini(v, loss, exposure);
    // thin the curve to about 200 points per strategy
    std::size_t step = std::max<std::size_t>(1, g.curve.size() / 200);
    for (std::size_t k = 0; k < g.curve.size(); ++k) {
      if (k % step != 0 && k + 1 != g.curve.size()) continue;
      t.rows.push_back({name, csv::fmt(g.curve[k].exposure_share), csv::fmt(g.curve[k].loss_share)});
    }
  }
  return t;
}

csv::Table age_table(const AuditReport& rep) {
  csv::Table t;
  t.header = {"age_group", "measure", "n", "min", "q25", "q50", "q75", "max", "mean"};
  auto add = [&](const std::vector<std::pair<std::string, Summary>>& v, const char* measure) {
    for (const auto& [k, m] : v)
      t.rows.push_back({k, measure, std::to_string(m.n), csv::fmt(m.min), csv::fmt(m.q25), csv::fmt(m.q50),
                        csv::fmt(m.q75), csv::fmt(m.max), csv::fmt(m.mean)});
  };
  add(rep.age_sensitivity_ev, "sensitivity_ev");
  add(rep.age_sensitivity_es, "sensitivity_es");
  return t;
}

const char* kStrategies[] = {"P_U", "P_DF", "P_MF_EV", "P_MF_ES"};

}  // namespace

RunOutput run_simulate(const RunConfig& cfg, const std::string& out_dir) {
  auto s = simulate(cfg, out_dir);
  return {s.hash, s.files};
}

RunOutput run_generate(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  auto gen = generate_portfolio(cfg.portfolio, cfg.seed);
  Writer w(cfg, out_dir);
  w.table("portfolio", gen.table);
  w.json("truth", gen.truth.to_json());
  return w.out;
}

RunOutput run_audit(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.variant != Variant::marginal) throw InvalidInput("audit supports the marginal variant only");
  EncodedData data;
  std::optional<PortfolioTruth> truth;
  Writer w(cfg, out_dir);
  if (cfg.audit.input.empty()) {
    auto gen = generate_portfolio(cfg.portfolio, cfg.seed);
    data = encode(gen.table, cfg.audit.age_bins);
    truth = gen.truth;
    w.json("truth", gen.truth.to_json());
  } else {
    data = encode(csv::read_file(cfg.audit.input), cfg.audit.age_bins);
  }
  auto rep = audit(cfg, data, truth);

  std::vector<Decision> decisions;
  for (const auto& r : rep.rows) decisions.push_back(r.decision);
  std::vector<std::string> xnames(data.layout.names.begin() + 1, data.layout.names.end());
  auto t = decision_table(decisions, xnames);
  for (auto h : {"P_MF_ES_adjustment", "ES", "sens_es", "exposure", "loss", "observed", "age_group"})
    t.header.push_back(h);
  for (std::size_t j = 0; j < t.rows.size(); ++j) {
    const auto& r = rep.rows[j];
    auto& row = t.rows[j];
    for (const auto& v : {r.es - r.decision.fair_es, r.es, r.sens_es, rep.exposure[j], rep.loss[j], rep.observed[j]})
      row.push_back(csv::fmt(v));
    row.push_back(r.age_group);
  }
  w.table("decisions", t);
  w.table("summary", summary_table(rep.strategies));
  w.table("quantile_bins", bins_table(rep.strategies));

  std::vector<std::pair<std::string, std::vector<double>>> cols(4);
  for (std::size_t s = 0; s < 4; ++s) cols[s].first = kStrategies[s];
  for (const auto& r : rep.rows) {
    cols[0].second.push_back(r.decision.unaware);
    cols[1].second.push_back(r.decision.discr_free);
    cols[2].second.push_back(r.decision.fair_ev);
    cols[3].second.push_back(r.decision.fair_es);
  }
  w.table("lorenz", lorenz_table(cols, rep.loss, rep.exposure));
  w.table("age_sensitivity", age_table(rep));
  w.json("models", rep.models.to_json());
  auto j = rep.to_json();
  j["config_hash"] = w.out.hash;
  j["config"] = cfg.to_json();
  w.json("report", j);
  return w.out;
}

RunOutput run_report(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (cfg.report.input.empty()) throw InvalidInput("report.input: path to a decisions CSV is required");
  auto t = csv::read_file(cfg.report.input);
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  for (auto s : kStrategies) cols.emplace_back(s, t.numeric(s));
  auto exposure = t.numeric("exposure"), loss = t.numeric("loss"), observed = t.numeric("observed");
  auto stats = strategy_stats(cols, observed, loss, exposure, cfg.report.n_bins);
  Writer w(cfg, out_dir);
  w.table("summary", summary_table(stats));
  w.table("quantile_bins", bins_table(stats));
  w.table("lorenz", lorenz_table(cols, loss, exposure));
  return w.out;
}

RunOutput run_sensitivity(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto& sc = cfg.sensitivity;
  const auto& p = sc.params;
  auto gamma = WeightFunction::parse(sc.rho);
  auto setup = study_setup(p);
  std::unique_ptr<ConditionalSampler> copula;
  ProtectedAttribute attr = setup.attribute;
  const ConditionalSampler* sampler = &setup.backend;
  if (sc.kind != "continuous") {
    if (cfg.variant == Variant::cascade) throw InvalidInput("cascade needs sensitivity.kind = continuous");
    attr.cascade.reset();
    attr.spec = sc.kind == "compact" ? ProtectedSpec::on_compact(CompactLaw::beta(sc.beta_a, sc.beta_b))
                                     : ProtectedSpec::on_levels(DiscreteLaw(sc.levels, sc.probs));
    copula = std::make_unique<CopulaSampler>(attr.spec, sc.copula_rho, p.mu_x, p.sd_x, 1, p.noise_sd);
    sampler = copula.get();
  }
  SensitivityProblem problem{&setup.model, sampler, {attr}};
  SensitivityOptions opts;
  opts.route = sc.route == "analytic" ? Route::analytic : sc.route == "simulation" ? Route::simulation : Route::automatic;
  opts.variant = cfg.variant;
  opts.formula = cfg.formula;
  opts.sim.n_draws = sc.n_draws;
  opts.sim.seed = cfg.seed;
  std::vector<std::vector<double>> xs;
  for (double x : sc.grid.points()) xs.push_back({x});
  auto rep = sensitivity_report(problem, gamma, xs, opts);
  Writer w(cfg, out_dir);
  w.table("sensitivity", rep.to_table());
  auto j = rep.to_json();
  j["config_hash"] = w.out.hash;
  j["config"] = cfg.to_json();
  w.json("sensitivity", j);
  return w.out;
}

}  // namespace mfair::pipeline
