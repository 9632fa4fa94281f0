#include "mfair/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include <boost/math/distributions/beta.hpp>

#include "mfair/csv.hpp"
#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair {

CompactLaw CompactLaw::uniform(double lo, double hi) {
  if (!(hi > lo)) throw InvalidInput("uniform law needs lo < hi");
  CompactLaw l;
  l.lo = lo;
  l.hi = hi;
  l.cdf = [lo, hi](double x) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); };
  l.pdf = [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 / (hi - lo) : 0.0; };
  l.quantile = [lo, hi](double u) { return lo + std::clamp(u, 0.0, 1.0) * (hi - lo); };
  l.name = "uniform";
  return l;
}

CompactLaw CompactLaw::beta(double a, double b, double lo, double hi) {
  if (!(a > 0 && b > 0) || !(hi > lo)) throw InvalidInput("beta law needs positive shapes and lo < hi");
  boost::math::beta_distribution<> dist(a, b);
  CompactLaw l;
  l.lo = lo;
  l.hi = hi;
  double w = hi - lo;
  l.cdf = [dist, lo, w](double x) { return boost::math::cdf(dist, std::clamp((x - lo) / w, 0.0, 1.0)); };
  l.pdf = [dist, lo, w](double x) {
    double z = (x - lo) / w;
    if (z <= 0.0 || z >= 1.0) return 0.0;
    return boost::math::pdf(dist, z) / w;
  };
  l.quantile = [dist, lo, w](double u) { return lo + w * boost::math::quantile(dist, std::clamp(u, 0.0, 1.0)); };
  l.name = "beta(" + csv::fmt(a) + "," + csv::fmt(b) + ")";
  return l;
}

DiscreteLaw::DiscreteLaw(std::vector<double> lv, std::vector<double> pr) : levels(std::move(lv)), probs(std::move(pr)) {
  if (levels.size() < 2 || levels.size() != probs.size()) throw InvalidInput("discrete law needs at least two levels with masses");
  double s = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (k && !(levels[k] > levels[k - 1])) throw InvalidInput("discrete levels must be strictly increasing");
    if (!(probs[k] > 0.0)) throw InvalidInput("discrete masses must be positive");
    s += probs[k];
  }
  if (std::abs(s - 1.0) > 1e-9) throw InvalidInput("discrete masses must sum to 1");
}

DiscreteLaw DiscreteLaw::bernoulli(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("bernoulli mass must lie in (0,1)");
  return DiscreteLaw({0.0, 1.0}, {1.0 - p, p});
}

double DiscreteLaw::cumulative(std::size_t k) const {
  if (k + 1 >= levels.size()) return 1.0;
  double s = 0.0;
  for (std::size_t j = 0; j <= k; ++j) s += probs[j];
  return s;
}

std::size_t DiscreteLaw::index_of(double t) const {
  for (std::size_t k = 0; k < levels.size(); ++k)
    if (levels[k] == t) return k;
  throw InvalidInput("value " + csv::fmt(t) + " is not a declared level");
}

double DiscreteLaw::cut_weight(std::size_t k) const {
  if (k + 1 >= levels.size()) throw InvalidInput("cut index out of range");
  double q = norm_quantile(cumulative(k));
  return -q * norm_pdf(q);
}

ProtectedSpec ProtectedSpec::continuous() { return {}; }

ProtectedSpec ProtectedSpec::on_compact(CompactLaw law) {
  ProtectedSpec s;
  s.kind = ProtectedKind::compact;
  s.compact = std::move(law);
  return s;
}

ProtectedSpec ProtectedSpec::on_levels(DiscreteLaw law) {
  ProtectedSpec s;
  s.kind = ProtectedKind::discrete;
  s.discrete = std::move(law);
  return s;
}

std::string to_string(ProtectedKind k) {
  switch (k) {
    case ProtectedKind::continuous: return "continuous";
    case ProtectedKind::compact: return "compact";
    case ProtectedKind::discrete: return "discrete";
  }
  return "?";
}

namespace {
void check_delta(double delta) {
  if (!(delta > -1.0) || !std::isfinite(delta)) throw InvalidInput("perturbation size must exceed -1");
}
}  // namespace

double perturb_continuous(double d, double delta) {
  check_delta(delta);
  return d * (1.0 + delta);
}

double perturb_compact(double u, double delta, const CompactLaw& law) {
  check_delta(delta);
  if (!(u > 0.0 && u < 1.0)) throw InvalidInput("compact perturbation needs u in (0,1)");
  return law.quantile(norm_cdf(norm_quantile(u) * (1.0 + delta)));
}

double perturb_cumulative_mass(double p, double delta) {
  check_delta(delta);
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("mass must lie in [0,1]");
  if (p == 0.0 || p == 1.0) return p;
  return norm_cdf(norm_quantile(p) / (1.0 + delta));
}

double perturb_discrete_mass(double p, double delta) { return 1.0 - perturb_cumulative_mass(1.0 - p, delta); }

double gdt_uniform(const DiscreteLaw& law, std::size_t k, double v) {
  if (k >= law.size()) throw InvalidInput("level index out of range");
  double lo = k ? law.cumulative(k - 1) : 0.0;
  return lo + v * law.probs[k];
}

std::size_t perturb_discrete_level(double u, double delta, const DiscreteLaw& law) {
  check_delta(delta);
  if (!(u > 0.0 && u < 1.0)) throw InvalidInput("discrete perturbation needs u in (0,1)");
  double w = norm_cdf(norm_quantile(u) * (1.0 + delta));
  for (std::size_t k = 0; k + 1 < law.size(); ++k)
    if (w <= law.cumulative(k)) return k;
  return law.size() - 1;
}

CascadeTable CascadeTable::from_samples(std::span<const double> t, std::span<const double> x, std::size_t n_bins,
                                        std::vector<double> v_grid) {
  if (t.size() != x.size() || t.size() < n_bins * 10 || n_bins < 2)
    throw InvalidInput("cascade table: need at least 10 samples per bin and two bins");
  std::vector<std::size_t> ord(t.size());
  std::iota(ord.begin(), ord.end(), std::size_t{0});
  std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  CascadeTable tab;
  tab.v_grid = std::move(v_grid);
  std::size_t n = ord.size();
  for (std::size_t b = 0; b < n_bins; ++b) {
    std::size_t lo = b * n / n_bins, hi = (b + 1) * n / n_bins;
    tab.bin_lower.push_back(t[ord[lo]]);
    tab.bin_upper.push_back(hi < n ? t[ord[hi]] : t[ord[n - 1]]);
    std::vector<double> xs;
    double tsum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      xs.push_back(x[ord[j]]);
      tsum += t[ord[j]];
    }
    tab.centers.push_back(tsum / static_cast<double>(hi - lo));
    std::sort(xs.begin(), xs.end());
    std::vector<double> row;
    for (double v : tab.v_grid) {
      // linear interpolation of the order statistics
      double pos = v * static_cast<double>(xs.size()) - 0.5;
      pos = std::clamp(pos, 0.0, static_cast<double>(xs.size() - 1));
      std::size_t i = static_cast<std::size_t>(pos);
      double f = pos - static_cast<double>(i);
      row.push_back(i + 1 < xs.size() ? xs[i] + f * (xs[i + 1] - xs[i]) : xs[i]);
    }
    tab.q.push_back(std::move(row));
  }
  tab.validate();
  return tab;
}

CascadeTable CascadeTable::load_csv(const std::string& path) {
  auto t = csv::read_file(path);
  auto lo = t.numeric("bin_lower"), hi = t.numeric("bin_upper"), v = t.numeric("v"), q = t.numeric("quantile");
  CascadeTable tab;
  for (std::size_t r = 0; r < lo.size(); ++r) {
    if (tab.bin_lower.empty() || tab.bin_lower.back() != lo[r] || tab.bin_upper.back() != hi[r]) {
      tab.bin_lower.push_back(lo[r]);
      tab.bin_upper.push_back(hi[r]);
      tab.q.emplace_back();
    }
    if (tab.q.size() == 1) tab.v_grid.push_back(v[r]);
    tab.q.back().push_back(q[r]);
  }
  tab.validate();
  return tab;
}

void CascadeTable::validate() const {
  if (bin_lower.size() < 2 || bin_lower.size() != bin_upper.size() || q.size() != bin_lower.size())
    throw InvalidInput("cascade table: need at least two bins");
  if (!centers.empty() && centers.size() != q.size()) throw InvalidInput("cascade table: one centre per bin");
  if (v_grid.size() < 2) throw InvalidInput("cascade table: need at least two rank levels");
  for (std::size_t i = 0; i < v_grid.size(); ++i)
    if (!(v_grid[i] > 0.0 && v_grid[i] < 1.0) || (i && !(v_grid[i] > v_grid[i - 1])))
      throw InvalidInput("cascade table: rank grid must be increasing in (0,1)");
  for (std::size_t b = 0; b < q.size(); ++b) {
    if (q[b].size() != v_grid.size()) throw InvalidInput("cascade table: ragged quantile rows");
    if (!centers.empty() && b && !(centers[b] > centers[b - 1])) throw InvalidInput("cascade table: bin centres must increase");
    if (b && !(bin_lower[b] >= bin_lower[b - 1])) throw InvalidInput("cascade table: bins must be sorted");
    for (std::size_t i = 1; i < q[b].size(); ++i)
      if (q[b][i] < q[b][i - 1]) throw InvalidInput("cascade table: quantiles must be nondecreasing in v");
  }
}

namespace {
double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) {
    double s = (ys[1] - ys[0]) / (xs[1] - xs[0]);
    return ys[0] + s * (x - xs[0]);
  }
  if (x >= xs.back()) {
    std::size_t n = xs.size();
    double s = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
    return ys[n - 1] + s * (x - xs[n - 1]);
  }
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t k = static_cast<std::size_t>(it - xs.begin());
  double w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return ys[k - 1] + w * (ys[k] - ys[k - 1]);
}
}  // namespace

double CascadeTable::quantile(double v, double t) const {
  if (!(v > 0.0 && v < 1.0)) throw NumericalError("cascade table: rank " + csv::fmt(v) + " outside (0,1)");
  if (t < bin_lower.front() || t > bin_upper.back())
    throw NumericalError("cascade table: value " + csv::fmt(t) + " outside the table support");
  std::vector<double> mids, vals;
  for (std::size_t b = 0; b < q.size(); ++b) {
    mids.push_back(centers.empty() ? 0.5 * (bin_lower[b] + bin_upper[b]) : centers[b]);
    vals.push_back(interp(v_grid, q[b], v));
  }
  return interp(mids, vals, t);
}

double CascadeTable::cdf(double x, double t) const {
  // invert the monotone interpolant in v by bisection
  double lo = v_grid.front() * 1e-3, hi = 1.0 - (1.0 - v_grid.back()) * 1e-3;
  if (x <= quantile(lo, t)) return lo;
  if (x >= quantile(hi, t)) return hi;
  for (int i = 0; i < 100; ++i) {
    double mid = 0.5 * (lo + hi);
    (quantile(mid, t) < x ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CascadeFactor CascadeFactor::gaussian_linear(std::size_t coordinate, double mean, double slope, double t_ref,
                                             double sd) {
  if (!(sd > 0)) throw InvalidInput("gaussian cascade factor needs sd > 0");
  CascadeFactor f;
  f.coordinate = coordinate;
  f.quantile = [=](double v, double t) { return mean + slope * (t - t_ref) + sd * norm_quantile(v); };
  f.cdf = [=](double x, double t) { return norm_cdf((x - mean - slope * (t - t_ref)) / sd); };
  f.pdf = [=](double x, double t) { return norm_pdf((x - mean - slope * (t - t_ref)) / sd) / sd; };
  f.scale = sd;
  f.linear_slope = slope;
  f.name = "gaussian";
  return f;
}

CascadeFactor CascadeFactor::from_table(std::size_t coordinate, CascadeTable table) {
  table.validate();
  CascadeFactor f;
  f.coordinate = coordinate;
  f.scale = table.bin_upper.back() - table.bin_lower.front();
  auto tab = std::make_shared<CascadeTable>(std::move(table));
  f.quantile = [tab](double v, double t) { return tab->quantile(v, t); };
  f.cdf = [tab](double x, double t) { return tab->cdf(x, t); };
  f.name = "table";
  return f;
}

bool CascadeSpec::masked(std::size_t coordinate) const {
  return std::find(mask.begin(), mask.end(), coordinate) != mask.end();
}

void CascadeSpec::validate() const {
  for (std::size_t c : mask) {
    bool known = std::any_of(factors.begin(), factors.end(), [&](const CascadeFactor& f) { return f.coordinate == c; });
    if (!known) throw InvalidInput("cascade mask references unknown coordinate " + std::to_string(c));
  }
  for (const auto& f : factors) {
    if (f.coordinate == source) throw InvalidInput("cascade factor cannot target its own source");
    if (!f.quantile) throw InvalidInput("cascade factor without a quantile function");
  }
}

double cond_quantile_slope(const CascadeFactor& f, double v, double t) {
  if (f.linear_slope) return *f.linear_slope;
  double h = 1e-3 * f.scale;
  double up = f.quantile(v, t + h), dn = f.quantile(v, t - h);
  double s = (up - dn) / (2.0 * h);
  if (!std::isfinite(s))
    throw NumericalError("cascade slope not finite at v=" + csv::fmt(v) + ", t=" + csv::fmt(t));
  return s;
}

std::vector<double> cascade_sample(const CascadeSpec& spec, double d, double d_new, std::span<const double> v) {
  if (v.size() != spec.factors.size()) throw InvalidInput("cascade_sample: one rank per factor required");
  std::vector<double> out(v.size());
  for (std::size_t l = 0; l < v.size(); ++l) {
    const auto& f = spec.factors[l];
    out[l] = f.quantile(v[l], spec.masked(f.coordinate) ? d : d_new);
  }
  return out;
}

std::vector<double> cascade_sample_scaled(const CascadeSpec& spec, double d, double delta, std::span<const double> v) {
  return cascade_sample(spec, d, perturb_continuous(d, delta), v);
}

}  // namespace mfair
