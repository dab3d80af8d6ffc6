#pragma once

// Test-only statistical machinery: hypothesis-test helpers and brute-force
// oracles kept independent of the library code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace test_stats {

inline double mean(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

// Survival function of the Kolmogorov distribution, Q(lambda) =
// 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_sf(double lambda) {
  if (lambda < 1e-8) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// Two-sample Kolmogorov-Smirnov test; returns the asymptotic p-value with
// the usual small-sample correction.
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n1 = a.size(), n2 = b.size();
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < n1 && j < n2) {
    const double x = std::min(a[i], b[j]);
    while (i < n1 && a[i] <= x) ++i;
    while (j < n2 && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  const double ne = static_cast<double>(n1) * n2 / static_cast<double>(n1 + n2);
  const double sqrt_ne = std::sqrt(ne);
  return kolmogorov_sf((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d);
}

// Upper-tail p-value of the chi-square statistic with df degrees of freedom.
inline double chi_square_pvalue(double statistic, double df) {
  return boost::math::gamma_q(df / 2.0, statistic / 2.0);
}

// Goodness-of-fit p-value of observed counts against probabilities.
inline double chi_square_gof_pvalue(std::span<const std::size_t> counts,
                                    std::span<const double> probs) {
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  double stat = 0.0;
  int df = -1;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = n * probs[i];
    if (expected < 1e-12) {
      if (counts[i] != 0) return 0.0;
      continue;
    }
    stat += (counts[i] - expected) * (counts[i] - expected) / expected;
    ++df;
  }
  if (df < 1) throw std::invalid_argument("chi_square_gof_pvalue: too few cells");
  return chi_square_pvalue(stat, df);
}

// Composite Simpson integration on [lo, hi].
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int intervals) {
  if (intervals % 2 != 0) ++intervals;
  const double h = (hi - lo) / intervals;
  double sum = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Brute-force evidence for a scalar linear-Gaussian SSM by dense-grid
// forward integration; independent of the Kalman recursion it checks.
struct GridSsm {
  double F, u, Q, R;  // x' = F x + u + N(0,Q); y = x' + N(0,R)
  double x0;
};

inline double grid_evidence(const GridSsm& ssm, std::span<const double> observations,
                            double lo, double hi, int n_points) {
  std::vector<double> grid(n_points);
  const double h = (hi - lo) / (n_points - 1);
  for (int i = 0; i < n_points; ++i) grid[i] = lo + i * h;
  auto normal_pdf = [](double x, double m, double v) {
    return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2.0 * M_PI * v);
  };
  // trapezoid weights
  std::vector<double> w(n_points, h);
  w.front() = w.back() = h / 2.0;

  std::vector<double> density(n_points);
  double log_evidence = 0.0;
  for (std::size_t k = 0; k < observations.size(); ++k) {
    std::vector<double> next(n_points, 0.0);
    if (k == 0) {
      for (int i = 0; i < n_points; ++i)
        next[i] = normal_pdf(grid[i], ssm.F * ssm.x0 + ssm.u, ssm.Q);
    } else {
      for (int i = 0; i < n_points; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n_points; ++j)
          acc += w[j] * density[j] * normal_pdf(grid[i], ssm.F * grid[j] + ssm.u, ssm.Q);
        next[i] = acc;
      }
    }
    double step_mass = 0.0;
    for (int i = 0; i < n_points; ++i) {
      next[i] *= normal_pdf(observations[k], grid[i], ssm.R);
      step_mass += w[i] * next[i];
    }
    log_evidence += std::log(step_mass);
    for (int i = 0; i < n_points; ++i) next[i] /= step_mass;
    density = std::move(next);
  }
  return log_evidence;
}

}  // namespace test_stats
