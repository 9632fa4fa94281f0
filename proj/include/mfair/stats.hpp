#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace mfair {

double norm_pdf(double z);
double norm_cdf(double z);
// Throws InvalidInput outside (0,1).
double norm_quantile(double u);

// Neumaier-compensated summation.
class KahanSum {
 public:
  void add(double v);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double sum(std::span<const double> v);
double mean(std::span<const double> v);
double weighted_mean(std::span<const double> v, std::span<const double> w);
// Standard error of the mean of v.
double std_error(std::span<const double> v);

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Delete-a-group jackknife. stat(keep) evaluates the statistic on rows with
// keep[j] == true. Rows are split into contiguous batches.
Estimate jackknife(std::size_t n, std::size_t batches,
                   const std::function<double(const std::vector<bool>&)>& stat);

using Rng = std::mt19937_64;

// Derive a child seed for stream `k` from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k);

double uniform01(Rng& rng);  // in (0,1)
double std_normal(Rng& rng);

}  // namespace mfair
