#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpf/level.hpp"
#include "mlpf/signed_log.hpp"

namespace mlpf {

// Output of one level's filter run: log p-hat_1^{l,N_l} from the fine
// marginal, log p-hat_2^{l-1,N_l} from the coarse one (absent at level 0),
// the per-time filter increment estimates, and the exact cost in
// Euler-step x particle units.
struct LevelEstimates {
  int l = 0;
  double log_nc_fine = 0.0;
  std::optional<double> log_nc_coarse;
  std::vector<double> filter_increments;
  std::uint64_t cost = 0;
};

namespace detail {

inline void validate_level_ladder(std::span<const LevelEstimates> levels) {
  if (levels.empty()) throw std::invalid_argument("estimator: no level estimates");
  if (levels[0].l != 0 || levels[0].log_nc_coarse.has_value())
    throw std::invalid_argument("estimator: first entry must be an uncoupled level-0 run");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (levels[i].l != static_cast<int>(i))
      throw std::invalid_argument("estimator: levels must be contiguous from 0");
    if (!levels[i].log_nc_coarse.has_value())
      throw std::invalid_argument("estimator: coupled level missing coarse estimate");
  }
}

}  // namespace detail

// log p-hat of a single filter: the sum of the per-step log mean-weight
// increments (the adaptive-resampling generalization of the product of
// weight means).
inline double nc_single_level(std::span<const double> nc_trace) {
  if (nc_trace.empty()) throw std::invalid_argument("nc_single_level: empty trace");
  return std::accumulate(nc_trace.begin(), nc_trace.end(), 0.0);
}

// ML unbiased estimator: sum over levels of (p-hat_1^l - p-hat_2^{l-1})
// with the level-0 coarse term defined as 0. Computed in signed log space;
// the result can be negative.
inline SignedLog nc_ml_unbiased(std::span<const LevelEstimates> levels) {
  detail::validate_level_ladder(levels);
  SignedLog total = SignedLog::from_log(levels[0].log_nc_fine);
  for (std::size_t i = 1; i < levels.size(); ++i) {
    total = total + (SignedLog::from_log(levels[i].log_nc_fine) -
                     SignedLog::from_log(*levels[i].log_nc_coarse));
  }
  return total;
}

// Biased but non-negative estimator: p-hat_1^0 times the product of
// fine/coarse ratios, i.e. a plain sum in log space.
inline double nc_ml_biased(std::span<const LevelEstimates> levels) {
  detail::validate_level_ladder(levels);
  double log_est = levels[0].log_nc_fine;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (std::isinf(levels[i].log_nc_fine) || std::isinf(*levels[i].log_nc_coarse))
      throw std::domain_error("nc_ml_biased: degenerate (zero) level estimate");
    log_est += levels[i].log_nc_fine - *levels[i].log_nc_coarse;
  }
  if (std::isinf(log_est)) throw std::domain_error("nc_ml_biased: degenerate (zero) level estimate");
  return log_est;
}

// Multilevel filter estimate at time k: the level-0 filter mean plus the
// coupled increment estimates.
inline double filter_ml_estimate(std::span<const LevelEstimates> levels, std::size_t k) {
  detail::validate_level_ladder(levels);
  double total = 0.0;
  for (const auto& lvl : levels) {
    if (k >= lvl.filter_increments.size())
      throw std::out_of_range("filter_ml_estimate: time index beyond recorded increments");
    total += lvl.filter_increments[k];
  }
  return total;
}

struct Allocation {
  enum class Rule { section4, section5 } rule = Rule::section5;
  int L = 0;
  std::vector<std::int64_t> particles;  // N_0 .. N_L
};

// N_l = floor(N_{0,L} h_l^{(beta+2gamma)/4}) with h_l = 2^-l and
// N_{0,L} = 2^{2L} L for constant diffusion (beta = 2), 2^{(9/4)L} otherwise.
inline Allocation allocate_section5(int L, int beta, int gamma) {
  if (L < 1) throw std::invalid_argument("allocate_section5: L must be >= 1");
  if (L > 20) throw std::overflow_error("allocate_section5: L > 20 overflows the particle counts");
  if (beta != 1 && beta != 2) throw std::invalid_argument("allocate_section5: beta must be 1 or 2");
  if (gamma != 1) throw std::invalid_argument("allocate_section5: gamma must be 1");
  Allocation a;
  a.rule = Allocation::Rule::section5;
  a.L = L;
  a.particles.reserve(L + 1);
  for (int l = 0; l <= L; ++l) {
    // exponents combined first so integral powers of two stay exact
    const double nl = (beta == 2)
                          ? std::floor(std::ldexp(static_cast<double>(L), 2 * L - l))
                          : std::floor(std::pow(2.0, 2.25 * L - 0.75 * l));
    a.particles.push_back(std::max<std::int64_t>(1, static_cast<std::int64_t>(nl)));
  }
  return a;
}

// L = ceil(log2(1/eps)); N_l = max(1, floor(C eps^-2 h_l^{3/4} K_L)) with
// K_L = sum_{l=0}^L h_l^{-1/4}.
inline Allocation allocate_section4(double epsilon, double C) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("allocate_section4: need 0 < epsilon < 1");
  if (!(C > 0.0)) throw std::invalid_argument("allocate_section4: need C > 0");
  const int L = static_cast<int>(std::ceil(std::log2(1.0 / epsilon) - 1e-9));
  double k_sum = 0.0;
  for (int l = 0; l <= L; ++l) k_sum += std::pow(level_width(l), -0.25);
  Allocation a;
  a.rule = Allocation::Rule::section4;
  a.L = L;
  a.particles.reserve(L + 1);
  const double scale = C / (epsilon * epsilon) * k_sum;
  for (int l = 0; l <= L; ++l) {
    const double nl = std::floor(scale * std::pow(level_width(l), 0.75));
    a.particles.push_back(std::max<std::int64_t>(1, static_cast<std::int64_t>(nl)));
  }
  return a;
}

enum class MlmcCase { beta_gt_gamma, beta_eq_gamma, beta_lt_gamma };

struct MlmcCost {
  MlmcCase regime = MlmcCase::beta_eq_gamma;
  std::string cost_formula;  // asymptotic C(eps)
};

inline MlmcCost mlmc_case(double beta, double gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0))
    throw std::invalid_argument("mlmc_case: beta and gamma must be positive");
  if (beta > gamma) return {MlmcCase::beta_gt_gamma, "O(eps^-2)"};
  if (beta == gamma) return {MlmcCase::beta_eq_gamma, "O(eps^-2 log(eps)^2)"};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "O(eps^%g)", -2.0 + (beta - gamma));
  return {MlmcCase::beta_lt_gamma, buf};
}

}  // namespace mlpf
