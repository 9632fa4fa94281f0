#include "mfair/pipeline/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mfair/errors.hpp"

namespace mfair::pipeline {

std::vector<double> Grid::points() const {
  if (!(step > 0.0) || !(to >= from)) throw InvalidInput("grid needs step > 0 and to >= from");
  const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> out(n);
  // multiply rather than accumulate so every point is reproducible
  for (std::size_t k = 0; k < n; ++k) out[k] = from + static_cast<double>(k) * step;
  for (double& v : out)
    if (std::abs(v) < 1e-12) v = 0.0;
  return out;
}

namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw InvalidInput("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_params(const json& j, LinearGaussianParams& p) {
  check_keys(j, {"mu_x", "mu_d", "sd_x", "sd_d", "tau", "noise_sd", "b0", "bx", "bd"}, "params");
  read(j, "mu_x", p.mu_x);
  read(j, "mu_d", p.mu_d);
  read(j, "sd_x", p.sd_x);
  read(j, "sd_d", p.sd_d);
  read(j, "tau", p.tau);
  read(j, "noise_sd", p.noise_sd);
  read(j, "b0", p.b0);
  read(j, "bx", p.bx);
  read(j, "bd", p.bd);
}

nlohmann::ordered_json params_json(const LinearGaussianParams& p) {
  return {{"mu_x", p.mu_x}, {"mu_d", p.mu_d}, {"sd_x", p.sd_x}, {"sd_d", p.sd_d}, {"tau", p.tau},
          {"noise_sd", p.noise_sd}, {"b0", p.b0}, {"bx", p.bx}, {"bd", p.bd}};
}

void read_grid(const json& j, Grid& g) {
  check_keys(j, {"from", "to", "step"}, "grid");
  read(j, "from", g.from);
  read(j, "to", g.to);
  read(j, "step", g.step);
}

nlohmann::ordered_json grid_json(const Grid& g) { return {{"from", g.from}, {"to", g.to}, {"step", g.step}}; }

void validate_params(const LinearGaussianParams& p) {
  if (!(p.sd_x > 0.0 && p.sd_d > 0.0 && p.noise_sd >= 0.0 && std::abs(p.tau) < 1.0))
    throw InvalidInput("params: need sd_x, sd_d > 0, noise_sd >= 0 and |tau| < 1");
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    check_keys(j, {"version", "seed", "variant", "formula", "simulate", "portfolio", "audit", "sensitivity", "report"},
               "config");
    read(j, "version", c.version);
    if (c.version != 1) throw InvalidInput("config: unsupported version " + std::to_string(c.version));
    read(j, "seed", c.seed);
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("formula")) c.formula = formula_from_string(j.at("formula").get<std::string>());

    if (j.contains("simulate")) {
      const auto& s = j.at("simulate");
      check_keys(s, {"params", "grid", "n_draws", "n_marginal", "es_level", "batches"}, "simulate");
      if (s.contains("params")) read_params(s.at("params"), c.simulate.params);
      if (s.contains("grid")) read_grid(s.at("grid"), c.simulate.grid);
      read(s, "n_draws", c.simulate.n_draws);
      read(s, "n_marginal", c.simulate.n_marginal);
      read(s, "es_level", c.simulate.es_level);
      read(s, "batches", c.simulate.batches);
    }
    if (j.contains("portfolio")) {
      const auto& s = j.at("portfolio");
      check_keys(s, {"n", "gender_coef", "base_frequency", "severity_mean", "severity_shape", "female_share"},
                 "portfolio");
      read(s, "n", c.portfolio.n);
      read(s, "gender_coef", c.portfolio.gender_coef);
      read(s, "base_frequency", c.portfolio.base_frequency);
      read(s, "severity_mean", c.portfolio.severity_mean);
      read(s, "severity_shape", c.portfolio.severity_shape);
      read(s, "female_share", c.portfolio.female_share);
    }
    if (j.contains("audit")) {
      const auto& s = j.at("audit");
      check_keys(s, {"input", "train_fraction", "split_seed", "es_level", "age_bins", "n_bins", "tweedie_power",
                     "optimizer", "step1"},
                 "audit");
      read(s, "input", c.audit.input);
      read(s, "train_fraction", c.audit.train_fraction);
      read(s, "split_seed", c.audit.split_seed);
      read(s, "es_level", c.audit.es_level);
      read(s, "age_bins", c.audit.age_bins);
      read(s, "n_bins", c.audit.n_bins);
      read(s, "tweedie_power", c.audit.tweedie_power);
      read(s, "optimizer", c.audit.optimizer);
      read(s, "step1", c.audit.step1);
    }
    if (j.contains("sensitivity")) {
      const auto& s = j.at("sensitivity");
      check_keys(s, {"rho", "kind", "levels", "probs", "beta_a", "beta_b", "copula_rho", "params", "grid", "n_draws",
                     "route"},
                 "sensitivity");
      read(s, "rho", c.sensitivity.rho);
      read(s, "kind", c.sensitivity.kind);
      read(s, "levels", c.sensitivity.levels);
      read(s, "probs", c.sensitivity.probs);
      read(s, "beta_a", c.sensitivity.beta_a);
      read(s, "beta_b", c.sensitivity.beta_b);
      read(s, "copula_rho", c.sensitivity.copula_rho);
      if (s.contains("params")) read_params(s.at("params"), c.sensitivity.params);
      if (s.contains("grid")) read_grid(s.at("grid"), c.sensitivity.grid);
      read(s, "n_draws", c.sensitivity.n_draws);
      read(s, "route", c.sensitivity.route);
    }
    if (j.contains("report")) {
      const auto& s = j.at("report");
      check_keys(s, {"input", "n_bins"}, "report");
      read(s, "input", c.report.input);
      read(s, "n_bins", c.report.n_bins);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("config " + path + ": " + e.what());
  }
  auto c = from_json(j);
  // relative data paths are taken relative to the config file
  auto base = std::filesystem::path(path).parent_path();
  auto fix = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  fix(c.audit.input);
  fix(c.report.input);
  return c;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["seed"] = seed;
  j["variant"] = to_string(variant);
  j["formula"] = to_string(formula);
  j["simulate"] = {{"params", params_json(simulate.params)},
                   {"grid", grid_json(simulate.grid)},
                   {"n_draws", simulate.n_draws},
                   {"n_marginal", simulate.n_marginal},
                   {"es_level", simulate.es_level},
                   {"batches", simulate.batches}};
  j["portfolio"] = {{"n", portfolio.n},
                    {"gender_coef", portfolio.gender_coef},
                    {"base_frequency", portfolio.base_frequency},
                    {"severity_mean", portfolio.severity_mean},
                    {"severity_shape", portfolio.severity_shape},
                    {"female_share", portfolio.female_share}};
  j["audit"] = {{"input", audit.input},
                {"train_fraction", audit.train_fraction},
                {"split_seed", audit.split_seed},
                {"es_level", audit.es_level},
                {"age_bins", audit.age_bins},
                {"n_bins", audit.n_bins},
                {"tweedie_power", audit.tweedie_power},
                {"optimizer", audit.optimizer},
                {"step1", audit.step1}};
  j["sensitivity"] = {{"rho", sensitivity.rho},
                      {"kind", sensitivity.kind},
                      {"levels", sensitivity.levels},
                      {"probs", sensitivity.probs},
                      {"beta_a", sensitivity.beta_a},
                      {"beta_b", sensitivity.beta_b},
                      {"copula_rho", sensitivity.copula_rho},
                      {"params", params_json(sensitivity.params)},
                      {"grid", grid_json(sensitivity.grid)},
                      {"n_draws", sensitivity.n_draws},
                      {"route", sensitivity.route}};
  j["report"] = {{"input", report.input}, {"n_bins", report.n_bins}};
  return j;
}

void RunConfig::validate() const {
  validate_params(simulate.params);
  validate_params(sensitivity.params);
  simulate.grid.points();
  sensitivity.grid.points();
  if (simulate.n_draws < 1000 || sensitivity.n_draws < 1000)
    throw InvalidInput("n_draws must be at least 1000");
  if (!(simulate.es_level >= 0.0 && simulate.es_level < 1.0)) throw InvalidInput("simulate.es_level must lie in [0,1)");
  if (!(audit.es_level > 0.0 && audit.es_level < 1.0)) throw InvalidInput("audit.es_level must lie in (0,1)");
  if (simulate.batches < 2) throw InvalidInput("simulate.batches must be at least 2");
  if (portfolio.n == 0) throw InvalidInput("portfolio.n must be positive");
  if (!(portfolio.base_frequency > 0.0 && portfolio.severity_mean > 0.0 && portfolio.severity_shape > 0.0))
    throw InvalidInput("portfolio: frequency, severity mean and shape must be positive");
  if (!(portfolio.female_share > 0.0 && portfolio.female_share < 1.0))
    throw InvalidInput("portfolio.female_share must lie in (0,1)");
  if (!(audit.train_fraction > 0.0 && audit.train_fraction < 1.0))
    throw InvalidInput("audit.train_fraction must lie in (0,1)");
  if (audit.age_bins.size() < 2) throw InvalidInput("audit.age_bins needs at least two lower bounds");
  for (std::size_t k = 1; k < audit.age_bins.size(); ++k)
    if (audit.age_bins[k] <= audit.age_bins[k - 1]) throw InvalidInput("audit.age_bins must be increasing");
  if (audit.n_bins < 2 || report.n_bins < 2) throw InvalidInput("n_bins must be at least 2");
  if (!(audit.tweedie_power > 1.0 && audit.tweedie_power < 2.0))
    throw InvalidInput("audit.tweedie_power must lie in (1,2)");
  if (audit.optimizer != "adam" && audit.optimizer != "irls") throw InvalidInput("audit.optimizer: adam or irls");
  if (audit.step1 != "fit" && audit.step1 != "truth") throw InvalidInput("audit.step1: fit or truth");
  const auto& k = sensitivity.kind;
  if (k != "continuous" && k != "compact" && k != "discrete")
    throw InvalidInput("sensitivity.kind: continuous, compact or discrete");
  if (sensitivity.route != "automatic" && sensitivity.route != "analytic" && sensitivity.route != "simulation")
    throw InvalidInput("sensitivity.route: automatic, analytic or simulation");
  WeightFunction::parse(sensitivity.rho);
}

std::string RunConfig::hash() const {
  std::string s = to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path);
  f << text;
  if (!f) throw InvalidInput("write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace mfair::pipeline
