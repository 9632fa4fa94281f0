#include "mfair/pipeline/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair::pipeline {

namespace {

const std::vector<std::string> kTypes{"A", "B", "C", "D", "E", "F"};
const std::vector<std::string> kCategories{"Large", "Medium", "Small"};
const std::vector<std::string> kOccupations{"Employed", "Housewife", "Retired", "Self-employed", "Unemployed"};
const std::vector<std::string> kGroup2{"L", "M", "N", "O", "P", "Q", "R", "S", "T", "U"};

std::size_t level_index(const std::vector<std::string>& levels, const std::string& v, const char* column) {
  auto it = std::find(levels.begin(), levels.end(), v);
  if (it == levels.end()) throw InvalidInput(std::string("unknown ") + column + " level '" + v + "'");
  return static_cast<std::size_t>(it - levels.begin());
}

std::string age_label(const std::vector<int>& bins, std::size_t k) {
  if (k + 1 == bins.size()) return std::to_string(bins[k]) + "+";
  return std::to_string(bins[k]) + "-" + std::to_string(bins[k + 1] - 1);
}

std::size_t age_bin(const std::vector<int>& bins, double age) {
  if (age < bins.front()) throw InvalidInput("age " + std::to_string(age) + " is below the first age bin");
  std::size_t k = 0;
  while (k + 1 < bins.size() && age >= bins[k + 1]) ++k;
  return k;
}

std::size_t draw_index(Rng& rng, const std::vector<double>& probs) {
  double u = uniform01(rng), acc = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    acc += probs[k];
    if (u <= acc) return k;
  }
  return probs.size() - 1;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

const std::vector<std::string>& portfolio_columns() {
  static const std::vector<std::string> cols{"Gender", "Type",  "Category", "Occupation", "Age",      "Group1",  "Poldur",
                                             "Value",  "Adind", "Group2",   "Density",    "Exppdays", "Numtppd", "Indtppd"};
  return cols;
}

const std::vector<int>& generator_age_bins() {
  static const std::vector<int> bins{18, 28, 38, 48, 58, 68};
  return bins;
}

std::vector<std::string> encoded_names(const std::vector<int>& age_bins) {
  std::vector<std::string> n{"Female"};
  for (std::size_t k = 1; k < kTypes.size(); ++k) n.push_back("Type_" + kTypes[k]);
  for (std::size_t k = 1; k < kCategories.size(); ++k) n.push_back("Category_" + kCategories[k]);
  for (std::size_t k = 1; k < kOccupations.size(); ++k) n.push_back("Occupation_" + kOccupations[k]);
  for (std::size_t k = 1; k < age_bins.size(); ++k) n.push_back("Age_" + age_label(age_bins, k));
  for (std::size_t k = 1; k < kGroup2.size(); ++k) n.push_back("Group2_" + kGroup2[k]);
  for (const char* c : {"Group1", "Poldur", "LogValue", "Adind", "LogDensity"}) n.push_back(c);
  return n;
}

EncodedData encode(const csv::Table& table, const std::vector<int>& age_bins) {
  for (const auto& c : portfolio_columns())
    if (!table.has_column(c)) throw InvalidInput("portfolio: missing column '" + c + "'");
  if (table.rows.empty()) throw InvalidInput("portfolio: no rows");
  const auto names = encoded_names(age_bins);
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto p = static_cast<Eigen::Index>(names.size());

  EncodedData e;
  e.Z = Eigen::MatrixXd::Zero(n, p);
  e.y.resize(n);
  e.w.resize(n);
  e.loss.resize(n);
  e.layout.names = names;
  e.layout.n_protected = 1;
  e.layout.one_hot.assign(names.size(), false);
  e.layout.levels = {{0.0, 1.0}};

  auto col = [&](const char* name) { return table.column(name); };
  const auto cg = col("Gender"), ct = col("Type"), cc = col("Category"), co = col("Occupation"), ca = col("Age"),
             c1 = col("Group1"), cp = col("Poldur"), cv = col("Value"), cad = col("Adind"), c2 = col("Group2"),
             cd = col("Density"), ce = col("Exppdays"), ci = col("Indtppd");

  const Eigen::Index off_type = 1, off_cat = off_type + 5, off_occ = off_cat + 2, off_age = off_occ + 4;
  const Eigen::Index off_g2 = off_age + static_cast<Eigen::Index>(age_bins.size()) - 1, off_num = off_g2 + 9;

  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    const std::string& g = row[cg];
    if (g == "Female")
      e.Z(r, 0) = 1.0;
    else if (g != "Male")
      throw InvalidInput("portfolio: Gender must be Male or Female, got '" + g + "'");
    if (auto k = level_index(kTypes, row[ct], "Type"); k > 0) e.Z(r, off_type + static_cast<Eigen::Index>(k) - 1) = 1.0;
    if (auto k = level_index(kCategories, row[cc], "Category"); k > 0)
      e.Z(r, off_cat + static_cast<Eigen::Index>(k) - 1) = 1.0;
    if (auto k = level_index(kOccupations, row[co], "Occupation"); k > 0)
      e.Z(r, off_occ + static_cast<Eigen::Index>(k) - 1) = 1.0;
    double age = csv::to_double(row[ca], "Age");
    auto ab = age_bin(age_bins, age);
    if (ab > 0) e.Z(r, off_age + static_cast<Eigen::Index>(ab) - 1) = 1.0;
    e.age_group.push_back(age_label(age_bins, ab));
    if (auto k = level_index(kGroup2, row[c2], "Group2"); k > 0) e.Z(r, off_g2 + static_cast<Eigen::Index>(k) - 1) = 1.0;

    double value = csv::to_double(row[cv], "Value"), density = csv::to_double(row[cd], "Density");
    if (!(value > 0.0) || !(density > 0.0)) throw InvalidInput("portfolio: Value and Density must be positive");
    e.Z(r, off_num + 0) = (csv::to_double(row[c1], "Group1") - 10.0) / 10.0;
    e.Z(r, off_num + 1) = (csv::to_double(row[cp], "Poldur") - 7.0) / 10.0;
    e.Z(r, off_num + 2) = std::log(value / 15000.0);
    e.Z(r, off_num + 3) = csv::to_double(row[cad], "Adind");
    e.Z(r, off_num + 4) = (std::log(density) - 4.0) / 2.0;

    double days = csv::to_double(row[ce], "Exppdays");
    if (!(days > 0.0 && days <= 366.0)) throw InvalidInput("portfolio: Exppdays must lie in (0, 366]");
    double loss = csv::to_double(row[ci], "Indtppd");
    if (loss < 0.0) throw InvalidInput("portfolio: negative Indtppd");
    e.w[r] = days / 365.0;
    e.loss[r] = loss;
    e.y[r] = loss / e.w[r];
  }
  return e;
}

Dataset EncodedData::dataset() const {
  Dataset d;
  d.Z = Z;
  d.y = y;
  d.w = w;
  d.layout = layout;
  return d;
}

Dataset EncodedData::unaware_dataset() const {
  Dataset d;
  d.Z = covariates();
  d.y = y;
  d.w = w;
  d.layout = FeatureLayout::plain(0, static_cast<std::size_t>(d.Z.cols()));
  d.layout.names.assign(layout.names.begin() + 1, layout.names.end());
  return d;
}

EncodedData EncodedData::rows(const std::vector<std::size_t>& idx) const {
  EncodedData e;
  const auto n = static_cast<Eigen::Index>(idx.size());
  e.Z.resize(n, Z.cols());
  e.y.resize(n);
  e.w.resize(n);
  e.loss.resize(n);
  e.layout = layout;
  for (Eigen::Index r = 0; r < n; ++r) {
    auto s = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    e.Z.row(r) = Z.row(s);
    e.y[r] = y[s];
    e.w[r] = w[s];
    e.loss[r] = loss[s];
    e.age_group.push_back(age_group[static_cast<std::size_t>(s)]);
  }
  return e;
}

PredictionModel PortfolioTruth::model(double power) const {
  FeatureLayout l;
  l.names = names;
  l.n_protected = 1;
  l.one_hot.assign(names.size(), false);
  l.levels = {{0.0, 1.0}};
  return PredictionModel::glm(Family::tweedie, Link::log, power, coef, l);
}

nlohmann::ordered_json PortfolioTruth::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "mfair.portfolio_truth";
  j["version"] = 1;
  j["base_frequency"] = base_frequency;
  j["severity_mean"] = severity_mean;
  j["severity_shape"] = severity_shape;
  j["names"] = names;
  j["coef"] = coef;
  return j;
}

PortfolioTruth PortfolioTruth::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mfair.portfolio_truth") throw InvalidInput("not a portfolio truth file");
    PortfolioTruth t;
    t.base_frequency = j.at("base_frequency").get<double>();
    t.severity_mean = j.at("severity_mean").get<double>();
    t.severity_shape = j.at("severity_shape").get<double>();
    t.names = j.at("names").get<std::vector<std::string>>();
    t.coef = j.at("coef").get<std::vector<double>>();
    if (t.coef.size() != t.names.size() + 1) throw InvalidInput("portfolio truth: coefficient count mismatch");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("portfolio truth: ") + e.what());
  }
}

PortfolioTruth portfolio_truth(const PortfolioConfig& cfg) {
  PortfolioTruth t;
  t.names = encoded_names(generator_age_bins());
  t.base_frequency = cfg.base_frequency;
  t.severity_mean = cfg.severity_mean;
  t.severity_shape = cfg.severity_shape;
  t.coef = {std::log(cfg.base_frequency * cfg.severity_mean), cfg.gender_coef};
  const std::vector<double> rest{
      0.05, 0.10, 0.20, 0.30, 0.40,                              // Type B..F
      -0.10, -0.25,                                              // Category Medium, Small
      -0.15, -0.20, 0.15, 0.10,                                  // Occupation
      -0.30, -0.45, -0.50, -0.45, -0.30,                         // age groups 28-37 .. 68+
      -0.10, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40,     // Group2 M..U
      0.30, -0.20, 0.15, 0.10, 0.30};                            // numeric
  t.coef.insert(t.coef.end(), rest.begin(), rest.end());
  if (t.coef.size() != t.names.size() + 1) throw std::logic_error("portfolio truth out of step with the encoding");
  return t;
}

GeneratedPortfolio generate_portfolio(const PortfolioConfig& cfg, std::uint64_t seed) {
  if (cfg.n == 0) throw InvalidInput("portfolio: n must be positive");
  if (!(cfg.female_share > 0.0 && cfg.female_share < 1.0)) throw InvalidInput("portfolio: female_share in (0,1)");
  const std::size_t n = cfg.n;
  Rng rng(seed);

  struct Row {
    std::size_t type, cat, occ, group2;
    int age, group1, poldur, adind, days;
    double value, density;
    bool female = false;
  };
  std::vector<Row> rows(n);
  for (auto& r : rows) {
    r.type = draw_index(rng, {0.25, 0.20, 0.20, 0.15, 0.12, 0.08});
    r.cat = draw_index(rng, {0.30, 0.45, 0.25});
    r.occ = draw_index(rng, {0.45, 0.08, 0.15, 0.20, 0.12});
    double a = r.occ == 2 ? 68.0 + 6.0 * std_normal(rng) : 42.0 + 12.0 * std_normal(rng);
    r.age = static_cast<int>(std::clamp(std::round(a), r.occ == 2 ? 55.0 : 18.0, r.occ == 2 ? 95.0 : 80.0));
    r.group1 = 1 + static_cast<int>(std::floor(20.0 * uniform01(rng)));
    r.poldur = static_cast<int>(std::floor(16.0 * uniform01(rng)));
    r.value = std::round(std::clamp(std::exp(std::log(15000.0) + 0.5 * std_normal(rng)), 1000.0, 50000.0));
    r.adind = uniform01(rng) < 0.5 ? 1 : 0;
    r.group2 = static_cast<std::size_t>(std::floor(10.0 * uniform01(rng)));
    r.density = round2(std::clamp(std::exp(4.0 + 1.2 * std_normal(rng)), 1.0, 5000.0));
    r.days = uniform01(rng) < 0.6 ? 365 : 30 + static_cast<int>(std::floor(335.0 * uniform01(rng)));
  }

  // P(Female | covariates): logistic score shifted to hit the configured share
  std::vector<double> score(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& r = rows[j];
    score[j] = 2.5 * (r.occ == 1) - 0.4 * (r.occ == 2) + 0.3 * (r.cat == 2) - 0.015 * (r.age - 45);
  }
  auto share = [&](double a) {
    KahanSum s;
    for (double v : score) s.add(1.0 / (1.0 + std::exp(-(a + v))));
    return s.value() / static_cast<double>(n);
  };
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    (share(mid) < cfg.female_share ? lo : hi) = mid;
  }
  const double shift = 0.5 * (lo + hi);
  for (std::size_t j = 0; j < n; ++j) rows[j].female = uniform01(rng) < 1.0 / (1.0 + std::exp(-(shift + score[j])));

  GeneratedPortfolio out;
  out.truth = portfolio_truth(cfg);
  const auto& b = out.truth.coef;
  const auto& bins = generator_age_bins();
  out.table.header = portfolio_columns();
  const double scale = cfg.severity_mean / cfg.severity_shape;
  for (const auto& r : rows) {
    double eta = b[1] * (r.female ? 1.0 : 0.0);
    if (r.type > 0) eta += b[1 + r.type];
    if (r.cat > 0) eta += b[6 + r.cat];
    if (r.occ > 0) eta += b[8 + r.occ];
    if (auto ab = age_bin(bins, r.age); ab > 0) eta += b[12 + ab];
    if (r.group2 > 0) eta += b[17 + r.group2];
    eta += b[27] * (r.group1 - 10.0) / 10.0 + b[28] * (r.poldur - 7.0) / 10.0 + b[29] * std::log(r.value / 15000.0) +
           b[30] * r.adind + b[31] * (std::log(r.density) - 4.0) / 2.0;
    const double exposure = r.days / 365.0;
    std::poisson_distribution<int> pois(exposure * cfg.base_frequency * std::exp(eta));
    int claims = pois(rng);
    double loss = 0.0;
    if (claims > 0) {
      std::gamma_distribution<double> g(cfg.severity_shape * claims, 1.0);
      loss = round2(g(rng) * scale);
    }
    out.table.rows.push_back({r.female ? "Female" : "Male", kTypes[r.type], kCategories[r.cat], kOccupations[r.occ],
                              std::to_string(r.age), std::to_string(r.group1), std::to_string(r.poldur),
                              csv::fmt(r.value), std::to_string(r.adind), kGroup2[r.group2], csv::fmt(r.density),
                              std::to_string(r.days), std::to_string(claims), csv::fmt(loss)});
  }
  return out;
}

}  // namespace mfair::pipeline
