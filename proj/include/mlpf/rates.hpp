#pragma once

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpf/experiment.hpp"
#include "mlpf/level.hpp"

namespace mlpf {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::vector<std::pair<double, double>> points;  // (log-x, log-y)
};

inline RateFit ols_fit(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n < 3) throw std::invalid_argument("ols_fit: need >= 3 paired points");
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
      throw std::invalid_argument("ols_fit: non-finite point");
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("ols_fit: degenerate x values");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) fit.points.emplace_back(xs[i], ys[i]);
  return fit;
}

// OLS of log2(var) on log2(h_l); the slope is the empirical strong-error
// rate beta/2.
inline RateFit estimate_variance_rate(std::span<const double> per_level_variances,
                                      std::span<const int> levels) {
  if (per_level_variances.size() != levels.size() || levels.size() < 3)
    throw std::invalid_argument("estimate_variance_rate: need >= 3 levels");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(per_level_variances[i] > 0.0))
      throw std::invalid_argument("estimate_variance_rate: zero variance at level " +
                                  std::to_string(levels[i]));
    xs.push_back(std::log2(level_width(levels[i])));
    ys.push_back(std::log2(per_level_variances[i]));
  }
  return ols_fit(xs, ys);
}

// Mean and variance of the c^n-scaled linear estimates in a row group.
struct ScaledMoments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n = 0;
};

inline ScaledMoments scaled_moments(std::span<const ResultsRow> rows, double n_log_c) {
  ScaledMoments m;
  double sum = 0.0;
  for (const auto& row : rows) {
    const double v = row.estimate.sign == 0
                         ? 0.0
                         : row.estimate.sign * std::exp(row.estimate.log_abs + n_log_c);
    sum += v;
    ++m.n;
  }
  if (m.n == 0) return m;
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0.0;
  for (const auto& row : rows) {
    const double v = row.estimate.sign == 0
                         ? 0.0
                         : row.estimate.sign * std::exp(row.estimate.log_abs + n_log_c);
    ss += (v - m.mean) * (v - m.mean);
  }
  m.variance = m.n > 1 ? ss / static_cast<double>(m.n - 1) : 0.0;
  return m;
}

struct CostRatePoint {
  int L = 0;
  double mse = 0.0;
  double mean_cost = 0.0;
  std::size_t replicates = 0;
};

// Per-L MSE of the scaled estimates against the scaled truth, one point per
// L value present for the estimator.
inline std::vector<CostRatePoint> cost_rate_points(const ResultsTable& table,
                                                   const std::string& estimator,
                                                   double log_truth, double log_c) {
  const double n_log_c = static_cast<double>(table.n_obs) * log_c;
  const double truth_scaled = std::exp(log_truth + n_log_c);
  std::map<int, std::vector<const ResultsRow*>> by_L;
  for (const auto& row : table.rows)
    if (row.estimator == estimator) by_L[row.L].push_back(&row);
  std::vector<CostRatePoint> points;
  for (const auto& [L, rows] : by_L) {
    CostRatePoint pt;
    pt.L = L;
    double se_sum = 0.0, cost_sum = 0.0;
    for (const auto* row : rows) {
      const double v = row->estimate.sign == 0
                           ? 0.0
                           : row->estimate.sign * std::exp(row->estimate.log_abs + n_log_c);
      se_sum += (v - truth_scaled) * (v - truth_scaled);
      cost_sum += static_cast<double>(row->cost);
    }
    pt.replicates = rows.size();
    pt.mse = se_sum / static_cast<double>(rows.size());
    pt.mean_cost = cost_sum / static_cast<double>(rows.size());
    if (!(pt.mse > 0.0))
      throw std::invalid_argument("cost_rate_points: zero MSE at L=" + std::to_string(L));
    points.push_back(pt);
  }
  return points;
}

// OLS of log(cost) on log(MSE), one fit per estimator present in the table.
inline std::map<std::string, RateFit> estimate_cost_rate(const ResultsTable& table,
                                                         double log_truth, double log_c) {
  std::map<std::string, RateFit> fits;
  std::vector<std::string> estimators;
  for (const auto& row : table.rows)
    if (std::find(estimators.begin(), estimators.end(), row.estimator) == estimators.end())
      estimators.push_back(row.estimator);
  for (const auto& name : estimators) {
    const auto points = cost_rate_points(table, name, log_truth, log_c);
    if (points.size() < 3) continue;
    std::vector<double> xs, ys;
    for (const auto& pt : points) {
      xs.push_back(std::log(pt.mse));
      ys.push_back(std::log(pt.mean_cost));
    }
    fits[name] = ols_fit(xs, ys);
  }
  return fits;
}

// Per-level variances of the "increment" rows (variance-rate experiments).
inline std::pair<std::vector<double>, std::vector<int>> increment_variances(
    const ResultsTable& table, double log_c) {
  const double n_log_c = static_cast<double>(table.n_obs) * log_c;
  std::map<int, std::vector<ResultsRow>> by_level;
  for (const auto& row : table.rows)
    if (row.estimator == "increment") by_level[row.L].push_back(row);
  std::vector<double> variances;
  std::vector<int> levels;
  for (const auto& [l, rows] : by_level) {
    variances.push_back(scaled_moments(rows, n_log_c).variance);
    levels.push_back(l);
  }
  return {variances, levels};
}

}  // namespace mlpf
