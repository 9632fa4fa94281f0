#include "mfair/stats.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "mfair/errors.hpp"

namespace mfair {

namespace {
const boost::math::normal kStd(0.0, 1.0);
}

double norm_pdf(double z) { return boost::math::pdf(kStd, z); }

double norm_cdf(double z) {
  if (z == INFINITY) return 1.0;
  if (z == -INFINITY) return 0.0;
  return boost::math::cdf(kStd, z);
}

double norm_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw InvalidInput("norm_quantile: u must lie in (0,1)");
  return boost::math::quantile(kStd, u);
}

void KahanSum::add(double v) {
  double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v))
    comp_ += (sum_ - t) + v;
  else
    comp_ += (v - t) + sum_;
  sum_ = t;
}

double sum(std::span<const double> v) {
  KahanSum s;
  for (double x : v) s.add(x);
  return s.value();
}

double mean(std::span<const double> v) {
  if (v.empty()) throw InvalidInput("mean of empty sample");
  return sum(v) / static_cast<double>(v.size());
}

double weighted_mean(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size() || v.empty()) throw InvalidInput("weighted_mean: size mismatch");
  KahanSum num, den;
  for (std::size_t i = 0; i < v.size(); ++i) {
    num.add(v[i] * w[i]);
    den.add(w[i]);
  }
  if (den.value() <= 0.0) throw InvalidInput("weighted_mean: non-positive total weight");
  return num.value() / den.value();
}

double std_error(std::span<const double> v) {
  std::size_t n = v.size();
  if (n < 2) return 0.0;
  double m = mean(v);
  KahanSum ss;
  for (double x : v) ss.add((x - m) * (x - m));
  return std::sqrt(ss.value() / static_cast<double>(n - 1) / static_cast<double>(n));
}

Estimate jackknife(std::size_t n, std::size_t batches,
                   const std::function<double(const std::vector<bool>&)>& stat) {
  if (batches < 2 || n < batches) throw InvalidInput("jackknife: need at least two non-empty batches");
  std::vector<bool> keep(n, true);
  Estimate out;
  out.value = stat(keep);
  std::vector<double> loo(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    std::size_t lo = b * n / batches, hi = (b + 1) * n / batches;
    for (std::size_t j = lo; j < hi; ++j) keep[j] = false;
    loo[b] = stat(keep);
    for (std::size_t j = lo; j < hi; ++j) keep[j] = true;
  }
  double m = mean(loo);
  KahanSum ss;
  for (double v : loo) ss.add((v - m) * (v - m));
  double B = static_cast<double>(batches);
  out.se = std::sqrt((B - 1.0) / B * ss.value());
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(Rng& rng) {
  // 53-bit mantissa, open interval
  double u;
  do {
    u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  } while (u == 0.0);
  return u;
}

double std_normal(Rng& rng) { return norm_quantile(uniform01(rng)); }

}  // namespace mfair
