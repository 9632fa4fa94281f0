#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfair {

// Continuous law on a bounded interval.
struct CompactLaw {
  double lo = 0.0, hi = 1.0;
  std::function<double(double)> cdf, pdf, quantile;
  std::string name;

  static CompactLaw uniform(double lo, double hi);
  // Beta(a, b) rescaled to [lo, hi].
  static CompactLaw beta(double a, double b, double lo = 0.0, double hi = 1.0);
};

// Finite ordered support t_1 < ... < t_K with masses pi_k.
struct DiscreteLaw {
  std::vector<double> levels;
  std::vector<double> probs;

  DiscreteLaw() = default;
  DiscreteLaw(std::vector<double> levels, std::vector<double> probs);
  static DiscreteLaw bernoulli(double p);  // levels {0,1}, P(1) = p

  std::size_t size() const { return levels.size(); }
  // p_k = P(D <= t_k), k = 0..K-1
  double cumulative(std::size_t k) const;
  std::size_t index_of(double t) const;  // InvalidInput when not a level
  // v_k = -Phi^{-1}(p_k) phi(Phi^{-1}(p_k)) for the cut between t_k and t_{k+1}
  double cut_weight(std::size_t k) const;
};

enum class ProtectedKind { continuous, compact, discrete };

struct ProtectedSpec {
  ProtectedKind kind = ProtectedKind::continuous;
  CompactLaw compact;
  DiscreteLaw discrete;

  static ProtectedSpec continuous();
  static ProtectedSpec on_compact(CompactLaw law);
  static ProtectedSpec on_levels(DiscreteLaw law);
};

std::string to_string(ProtectedKind k);

// d (1 + delta)
double perturb_continuous(double d, double delta);
// F^{-1}(Phi(Phi^{-1}(u)(1+delta))) for u = F(D)
double perturb_compact(double u, double delta, const CompactLaw& law);
// Phi(Phi^{-1}(p)/(1+delta)) for a cumulative cut p
double perturb_cumulative_mass(double p, double delta);
// Bernoulli success mass: 1 - Phi(Phi^{-1}(1-p)/(1+delta))
double perturb_discrete_mass(double p, double delta);
// Generalized distributional transform of level index k with auxiliary v.
double gdt_uniform(const DiscreteLaw& law, std::size_t k, double v);
// Level index of F^{-1}(Phi(Phi^{-1}(u)(1+delta)))
std::size_t perturb_discrete_level(double u, double delta, const DiscreteLaw& law);

// Conditional law of one coordinate given the source protected value t.
struct CascadeTable {
  std::vector<double> bin_lower, bin_upper;  // bins in t
  std::vector<double> v_grid;                // increasing in (0,1)
  std::vector<std::vector<double>> q;        // q[bin][v index]
  std::vector<double> centers;               // location of each bin; midpoints when empty

  static CascadeTable from_samples(std::span<const double> t, std::span<const double> x, std::size_t n_bins,
                                   std::vector<double> v_grid);
  // CSV columns: bin_lower,bin_upper,v,quantile
  static CascadeTable load_csv(const std::string& path);
  void validate() const;
  double quantile(double v, double t) const;
  double cdf(double x, double t) const;
};

struct CascadeFactor {
  std::size_t coordinate = 0;  // joint index: protected first, then the others
  std::function<double(double v, double t)> quantile;
  std::function<double(double x, double t)> cdf;
  std::function<double(double x, double t)> pdf;  // optional
  double scale = 1.0;                   // finite-difference step scale
  std::optional<double> linear_slope;   // exact slope when known
  std::string name;

  // X | D=t ~ N(mean + slope (t - t_ref), sd^2)
  static CascadeFactor gaussian_linear(std::size_t coordinate, double mean, double slope, double t_ref, double sd);
  static CascadeFactor from_table(std::size_t coordinate, CascadeTable table);
};

struct CascadeSpec {
  std::size_t source = 0;  // protected index driving the cascade
  std::vector<CascadeFactor> factors;
  std::vector<std::size_t> mask;  // coordinates held fixed

  bool masked(std::size_t coordinate) const;
  void validate() const;
};

// d/dt F^{-1}_{l|D}(v | t)
double cond_quantile_slope(const CascadeFactor& f, double v, double t);

// New values of the factor coordinates after the source moves from d to d_new,
// keeping the conditional ranks v (one per factor). Masked coordinates keep
// their value at d.
std::vector<double> cascade_sample(const CascadeSpec& spec, double d, double d_new, std::span<const double> v);
// Same with d_new = d (1 + delta).
std::vector<double> cascade_sample_scaled(const CascadeSpec& spec, double d, double delta, std::span<const double> v);

}  // namespace mfair
