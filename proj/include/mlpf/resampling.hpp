#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlpf/rng.hpp"

namespace mlpf {

struct total_particle_death : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double logsumexp(std::span<const double> log_values) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_values) mx = std::max(mx, v);
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double v : log_values) s += std::exp(v - mx);
  return mx + std::log(s);
}

// Unnormalized log-weights -> probabilities. All -inf means every particle
// is dead; that is a model/floor misconfiguration, not something to paper
// over by renormalizing.
inline std::vector<double> normalize_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("normalize_weights: empty input");
  const double lse = logsumexp(log_weights);
  if (lse == -std::numeric_limits<double>::infinity())
    throw total_particle_death("normalize_weights: all log-weights are -inf");
  std::vector<double> w(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - lse);
    sum += w[i];
  }
  for (double& wi : w) wi /= sum;
  return w;
}

// Effective sample size 1 / sum(w^2), in [1, N] for normalized weights.
inline double ess(std::span<const double> weights) {
  double s2 = 0.0;
  for (double w : weights) s2 += w * w;
  return 1.0 / s2;
}

namespace detail {

inline std::vector<double> inclusive_prefix_sum(std::span<const double> w) {
  std::vector<double> cum(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    cum[i] = acc;
  }
  return cum;
}

inline std::uint32_t draw_categorical(const std::vector<double>& cum, double u) {
  // u uniform on [0, 1); scale by the (possibly != 1) total mass
  const double target = u * cum.back();
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  if (it == cum.end()) --it;
  return static_cast<std::uint32_t>(it - cum.begin());
}

}  // namespace detail

// n_draws i.i.d. categorical draws (0 = cloud-sized).
inline std::vector<std::uint32_t> multinomial_resample(std::span<const double> weights,
                                                       RngStream& rng, std::size_t n_draws = 0) {
  if (n_draws == 0) n_draws = weights.size();
  const auto cum = detail::inclusive_prefix_sum(weights);
  std::vector<std::uint32_t> idx(n_draws);
  for (auto& i : idx) i = detail::draw_categorical(cum, rng.next_uniform());
  return idx;
}

struct ResampleIndices {
  std::vector<std::uint32_t> fine_idx;
  std::vector<std::uint32_t> coarse_idx;
  double coupled_fraction = 0.0;  // empirical share of branch-a draws
};

// Maximal-coupling resampling of a fine/coarse weight pair. Per draw,
// with probability alpha = sum_j min(wf_j, wc_j) a common ancestor J is
// drawn from min(wf, wc)/alpha; otherwise the two indices are drawn
// independently from the normalized residuals. Marginally each index is
// distributed exactly by its own weight vector.
inline ResampleIndices coupled_resample(std::span<const double> w_fine,
                                        std::span<const double> w_coarse, RngStream& rng,
                                        std::size_t n_draws = 0) {
  const std::size_t n = w_fine.size();
  if (w_coarse.size() != n)
    throw std::invalid_argument("coupled_resample: weight vectors differ in size");
  if (n_draws == 0) n_draws = n;

  std::vector<double> overlap(n), res_fine(n), res_coarse(n);
  double alpha = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    overlap[j] = std::min(w_fine[j], w_coarse[j]);
    res_fine[j] = w_fine[j] - overlap[j];
    res_coarse[j] = w_coarse[j] - overlap[j];
    alpha += overlap[j];
  }

  ResampleIndices out;
  out.fine_idx.resize(n_draws);
  out.coarse_idx.resize(n_draws);

  constexpr double kEps = 1e-12;
  if (alpha >= 1.0 - kEps) {
    // identical weight vectors: always branch a
    const auto cum = detail::inclusive_prefix_sum(overlap);
    for (std::size_t i = 0; i < n_draws; ++i) {
      const auto j = detail::draw_categorical(cum, rng.next_uniform());
      out.fine_idx[i] = j;
      out.coarse_idx[i] = j;
    }
    out.coupled_fraction = 1.0;
    return out;
  }
  if (alpha <= kEps) {
    // disjoint supports: always branch b
    const auto cum_f = detail::inclusive_prefix_sum(res_fine);
    const auto cum_c = detail::inclusive_prefix_sum(res_coarse);
    for (std::size_t i = 0; i < n_draws; ++i) {
      out.fine_idx[i] = detail::draw_categorical(cum_f, rng.next_uniform());
      out.coarse_idx[i] = detail::draw_categorical(cum_c, rng.next_uniform());
    }
    out.coupled_fraction = 0.0;
    return out;
  }

  const auto cum_overlap = detail::inclusive_prefix_sum(overlap);
  const auto cum_f = detail::inclusive_prefix_sum(res_fine);
  const auto cum_c = detail::inclusive_prefix_sum(res_coarse);
  std::size_t n_coupled = 0;
  for (std::size_t i = 0; i < n_draws; ++i) {
    if (rng.next_uniform() < alpha) {
      const auto j = detail::draw_categorical(cum_overlap, rng.next_uniform());
      out.fine_idx[i] = j;
      out.coarse_idx[i] = j;
      ++n_coupled;
    } else {
      out.fine_idx[i] = detail::draw_categorical(cum_f, rng.next_uniform());
      out.coarse_idx[i] = detail::draw_categorical(cum_c, rng.next_uniform());
    }
  }
  out.coupled_fraction = static_cast<double>(n_coupled) / static_cast<double>(n_draws);
  return out;
}

}  // namespace mlpf
