#include "mfair/pipeline/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfair/errors.hpp"
#include "mfair/stats.hpp"

namespace mfair::pipeline {

namespace {

std::vector<std::size_t> stable_order(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

void check_inputs(std::span<const double> a, std::span<const double> b, std::span<const double> e) {
  if (a.size() != b.size() || a.size() != e.size()) throw InvalidInput("diagnostics: columns differ in length");
  if (a.empty()) throw InvalidInput("diagnostics: no rows");
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (!std::isfinite(a[j]) || !std::isfinite(b[j])) throw InvalidInput("diagnostics: non-finite value");
    if (!(e[j] > 0.0)) throw InvalidInput("diagnostics: exposure must be positive");
  }
}

}  // namespace

GiniResult gini(std::span<const double> predicted, std::span<const double> losses, std::span<const double> exposure) {
  check_inputs(predicted, losses, exposure);
  const double total_e = sum(exposure), total_l = sum(losses);
  if (!(total_l != 0.0)) throw InvalidInput("gini: total loss is zero");
  GiniResult r;
  r.curve.push_back({0.0, 0.0});
  KahanSum ce, cl, area;
  double px = 0.0, py = 0.0;
  auto order = stable_order(predicted);
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::size_t j = order[k];
    ce.add(exposure[j]);
    cl.add(losses[j]);
    // tied predictions form one straight segment, independent of row order
    if (k + 1 < order.size() && predicted[order[k + 1]] == predicted[j]) continue;
    double x = ce.value() / total_e, y = cl.value() / total_l;
    area.add(0.5 * (x - px) * (y + py));
    r.curve.push_back({x, y});
    px = x;
    py = y;
  }
  r.curve.back() = {1.0, 1.0};
  r.index = 2.0 * (0.5 - area.value());
  return r;
}

QuantileBins quantile_bins(std::span<const double> predicted, std::span<const double> observed,
                           std::span<const double> exposure, std::size_t n_bins) {
  check_inputs(predicted, observed, exposure);
  if (n_bins < 2) throw InvalidInput("quantile_bins: need at least two bins");
  QuantileBins out;
  out.bins.resize(n_bins);
  std::vector<KahanSum> sp(n_bins), so(n_bins), se(n_bins);
  const double total = sum(exposure);
  KahanSum cum;
  std::size_t distinct = 0;
  double last = 0.0;
  for (std::size_t j : stable_order(predicted)) {
    if (distinct == 0 || predicted[j] != last) ++distinct;
    last = predicted[j];
    double mid = (cum.value() + 0.5 * exposure[j]) / total;
    cum.add(exposure[j]);
    auto b = std::min(n_bins - 1, static_cast<std::size_t>(mid * static_cast<double>(n_bins)));
    out.bins[b].rows++;
    se[b].add(exposure[j]);
    sp[b].add(exposure[j] * predicted[j]);
    so[b].add(exposure[j] * observed[j]);
  }
  out.merged = distinct < n_bins;
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& q = out.bins[b];
    q.exposure = se[b].value();
    if (q.rows == 0) {
      out.merged = true;
      q.predicted = q.observed = std::nan("");
      continue;
    }
    q.predicted = sp[b].value() / q.exposure;
    q.observed = so[b].value() / q.exposure;
  }
  return out;
}

csv::Table QuantileBins::to_table() const {
  csv::Table t;
  t.header = {"bin", "rows", "exposure", "predicted", "observed"};
  for (std::size_t b = 0; b < bins.size(); ++b)
    t.rows.push_back({std::to_string(b + 1), std::to_string(bins[b].rows), csv::fmt(bins[b].exposure),
                      csv::fmt(bins[b].predicted), csv::fmt(bins[b].observed)});
  return t;
}

Summary summarize(std::span<const double> v) {
  if (v.empty()) throw InvalidInput("summary of an empty column");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  auto q = [&](double p) {
    double h = p * static_cast<double>(s.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(h));
    auto hi = std::min(lo + 1, s.size() - 1);
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  Summary r;
  r.n = s.size();
  r.min = s.front();
  r.max = s.back();
  r.q25 = q(0.25);
  r.q50 = q(0.5);
  r.q75 = q(0.75);
  r.mean = mean(v);
  return r;
}

}  // namespace mfair::pipeline
