#pragma once

#include <span>
#include <string>
#include <vector>

#include "mfair/csv.hpp"

namespace mfair::pipeline {

struct LorenzPoint {
  double exposure_share = 0.0, loss_share = 0.0;
};

struct GiniResult {
  double index = 0.0;
  std::vector<LorenzPoint> curve;  // starts at (0,0), ends at (1,1)
};

// Rows sorted by prediction ascending (stable), cumulative exposure share
// against cumulative loss share; index = 2 * (area between diagonal and curve).
GiniResult gini(std::span<const double> predicted, std::span<const double> losses, std::span<const double> exposure);

struct QuantileBin {
  std::size_t rows = 0;
  double exposure = 0.0;
  double predicted = 0.0;  // exposure-weighted mean
  double observed = 0.0;   // exposure-weighted mean
};

struct QuantileBins {
  std::vector<QuantileBin> bins;
  bool merged = false;  // fewer distinct predictions than bins
  csv::Table to_table() const;
};

// Equal-exposure bins by predicted value. Row j goes to the bin holding the
// midpoint of its exposure interval.
QuantileBins quantile_bins(std::span<const double> predicted, std::span<const double> observed,
                           std::span<const double> exposure, std::size_t n_bins);

struct Summary {
  double min = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, max = 0.0, mean = 0.0;
  std::size_t n = 0;
};

// Order statistics with linear interpolation between closest ranks.
Summary summarize(std::span<const double> v);

}  // namespace mfair::pipeline
