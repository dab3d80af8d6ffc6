#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlpf/euler.hpp"
#include "mlpf/level.hpp"
#include "mlpf/models.hpp"
#include "mlpf/resampling.hpp"
#include "mlpf/rng.hpp"

namespace mlpf {

struct ResampleRule {
  enum class Kind { always, adaptive } kind = Kind::adaptive;
  double threshold = 0.25;  // resample when ESS < threshold * N

  static ResampleRule always() { return {Kind::always, 0.0}; }
  static ResampleRule adaptive(double threshold = 0.25) { return {Kind::adaptive, threshold}; }
  bool triggers(double ess_value, std::size_t n) const {
    return kind == Kind::always || ess_value < threshold * static_cast<double>(n);
  }
};

struct ParticleCloud {
  std::vector<double> positions;
  std::vector<double> log_weights;  // accumulated since the last resample
  double log_nc = 0.0;              // running log gamma_n(1)
  int time_index = 0;

  std::size_t n_particles() const { return positions.size(); }

  static ParticleCloud init(std::size_t n, double x0) {
    if (n < 1) throw std::invalid_argument("ParticleCloud: need at least one particle");
    ParticleCloud c;
    c.positions.assign(n, x0);
    c.log_weights.assign(n, 0.0);
    return c;
  }
};

struct CoupledCloud {
  ParticleCloud fine;
  ParticleCloud coarse;
  Level level;  // fine level, l >= 1

  static CoupledCloud init(std::size_t n, double x0, Level level) {
    if (level.l < 1) throw std::invalid_argument("CoupledCloud: level must be >= 1");
    return {ParticleCloud::init(n, x0), ParticleCloud::init(n, x0), level};
  }
};

// Weighted mean of phi under the current accumulated weights.
inline double weighted_mean(const ParticleCloud& cloud, const std::function<double(double)>& phi) {
  const auto w = normalize_weights(cloud.log_weights);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * phi(cloud.positions[i]);
  return acc;
}

// sum_i wf_i phi(xf_i) - sum_i wc_i phi(xc_i), with the accumulated
// normalized weights (post-weighting, pre-reset).
inline double filter_increment_estimate(const CoupledCloud& coupled,
                                        const TestFunction& phi) {
  return weighted_mean(coupled.fine, phi.phi) - weighted_mean(coupled.coarse, phi.phi);
}

struct PfStepStats {
  double nc_increment = 0.0;  // log-evidence contribution of this step
  double ess = 0.0;
  bool resampled = false;
  double filter_mean = 0.0;  // sum_i w_i phi(x_i), pre-reset
};

namespace detail {

inline void gather(std::vector<double>& values, const std::vector<std::uint32_t>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = values[idx[i]];
  values = std::move(out);
}

// log sum exp(lw_i + delta_i) without materializing the sum's arguments.
inline double shifted_logsumexp(std::span<const double> lw, std::span<const double> delta) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lw.size(); ++i) mx = std::max(mx, lw[i] + delta[i]);
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) s += std::exp(lw[i] + delta[i] - mx);
  return mx + std::log(s);
}

}  // namespace detail

// One observation step of the single-level particle filter: propagate every
// particle one observation interval, weight by G(x', y), accumulate the
// evidence increment log sum(exp(lw + lg)) - log sum(exp(lw)) (with
// per-step resampling this is the usual log of the weight mean), then
// resample per rule and reset the accumulated weights.
inline PfStepStats pf_step(ParticleCloud& cloud, double y, const ModelInstance& model,
                           const Level& level, const ResampleRule& rule,
                           const StreamFactory& streams) {
  const std::size_t n = cloud.n_particles();
  const auto k = static_cast<std::uint64_t>(cloud.time_index);
  std::vector<double> log_g(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto stream = streams.propagate(i, k);
    cloud.positions[i] = euler_transition(model.diffusion_model, level, cloud.positions[i], stream);
    log_g[i] = model.observation_model.log_likelihood(cloud.positions[i], y);
  }

  const double before = logsumexp(cloud.log_weights);
  const double after = detail::shifted_logsumexp(cloud.log_weights, log_g);
  if (after == -std::numeric_limits<double>::infinity())
    throw total_particle_death("pf_step: all particles dead at time " +
                               std::to_string(cloud.time_index + 1));

  PfStepStats stats;
  stats.nc_increment = after - before;
  cloud.log_nc += stats.nc_increment;
  for (std::size_t i = 0; i < n; ++i) cloud.log_weights[i] += log_g[i];

  const auto w = normalize_weights(cloud.log_weights);
  stats.ess = ess(w);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += w[i] * model.test_function.phi(cloud.positions[i]);
  stats.filter_mean = mean;

  if (rule.triggers(stats.ess, n)) {
    auto rng = streams.resample(k);
    const auto idx = multinomial_resample(w, rng);
    detail::gather(cloud.positions, idx);
    cloud.log_weights.assign(n, 0.0);
    stats.resampled = true;
  }
  ++cloud.time_index;
  return stats;
}

struct CpfStepStats {
  double nc_increment_fine = 0.0;
  double nc_increment_coarse = 0.0;
  double ess_fine = 0.0;
  double ess_coarse = 0.0;
  double alpha = std::numeric_limits<double>::quiet_NaN();  // set when resampled
  double coupled_fraction = std::numeric_limits<double>::quiet_NaN();
  bool resampled = false;
  double increment_estimate = 0.0;  // fine/coarse filter difference, pre-reset
};

// One observation step of the coupled filter. Pairs share Euler increments;
// the adaptive trigger reads the coarse marginal's ESS only, and a trigger
// resamples BOTH marginals jointly via the maximal coupling so the pairing
// stays aligned.
inline CpfStepStats cpf_step(CoupledCloud& coupled, double y, const ModelInstance& model,
                             const ResampleRule& rule, const StreamFactory& streams) {
  ParticleCloud& fine = coupled.fine;
  ParticleCloud& coarse = coupled.coarse;
  const std::size_t n = fine.n_particles();
  const auto k = static_cast<std::uint64_t>(fine.time_index);

  std::vector<double> log_g_fine(n), log_g_coarse(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto stream = streams.propagate(i, k);
    auto [xf, xc] = coupled_euler_transition(model.diffusion_model, coupled.level,
                                             fine.positions[i], coarse.positions[i], stream);
    fine.positions[i] = xf;
    coarse.positions[i] = xc;
    log_g_fine[i] = model.observation_model.log_likelihood(xf, y);
    log_g_coarse[i] = model.observation_model.log_likelihood(xc, y);
  }

  CpfStepStats stats;
  const double before_f = logsumexp(fine.log_weights);
  const double after_f = detail::shifted_logsumexp(fine.log_weights, log_g_fine);
  if (after_f == -std::numeric_limits<double>::infinity())
    throw total_particle_death("cpf_step: fine marginal dead at time " +
                               std::to_string(fine.time_index + 1));
  const double before_c = logsumexp(coarse.log_weights);
  const double after_c = detail::shifted_logsumexp(coarse.log_weights, log_g_coarse);
  if (after_c == -std::numeric_limits<double>::infinity())
    throw total_particle_death("cpf_step: coarse marginal dead at time " +
                               std::to_string(coarse.time_index + 1));

  stats.nc_increment_fine = after_f - before_f;
  stats.nc_increment_coarse = after_c - before_c;
  fine.log_nc += stats.nc_increment_fine;
  coarse.log_nc += stats.nc_increment_coarse;
  for (std::size_t i = 0; i < n; ++i) {
    fine.log_weights[i] += log_g_fine[i];
    coarse.log_weights[i] += log_g_coarse[i];
  }

  const auto w_fine = normalize_weights(fine.log_weights);
  const auto w_coarse = normalize_weights(coarse.log_weights);
  stats.ess_fine = ess(w_fine);
  stats.ess_coarse = ess(w_coarse);

  double mean_f = 0.0, mean_c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_f += w_fine[i] * model.test_function.phi(fine.positions[i]);
    mean_c += w_coarse[i] * model.test_function.phi(coarse.positions[i]);
  }
  stats.increment_estimate = mean_f - mean_c;

  if (rule.triggers(stats.ess_coarse, n)) {
    auto rng = streams.resample(k);
    const auto idx = coupled_resample(w_fine, w_coarse, rng);
    double alpha = 0.0;
    for (std::size_t j = 0; j < n; ++j) alpha += std::min(w_fine[j], w_coarse[j]);
    stats.alpha = alpha;
    stats.coupled_fraction = idx.coupled_fraction;
    detail::gather(fine.positions, idx.fine_idx);
    detail::gather(coarse.positions, idx.coarse_idx);
    fine.log_weights.assign(n, 0.0);
    coarse.log_weights.assign(n, 0.0);
    stats.resampled = true;
  }
  ++fine.time_index;
  ++coarse.time_index;
  return stats;
}

// Per-step diagnostics accumulated over a run; optionally streamed out as
// CSV by the harness.
struct FilterTrace {
  std::vector<int> time;
  std::vector<double> ess_fine, ess_coarse, alpha, log_nc_fine, log_nc_coarse;
  std::vector<int> resampled;
};

struct PfRun {
  int level = 0;
  double log_nc = 0.0;
  std::vector<double> nc_trace;       // per-step evidence increments
  std::vector<double> filter_means;   // sum w phi(x) per step, pre-reset
  std::uint64_t cost = 0;             // Euler steps x particles
  int resample_count = 0;
};

inline PfRun run_pf(const ModelInstance& model, const Level& level, std::size_t n_particles,
                    std::span<const double> observations, const ResampleRule& rule,
                    const StreamFactory& streams, FilterTrace* trace = nullptr) {
  auto cloud = ParticleCloud::init(n_particles, model.diffusion_model.x0);
  PfRun run;
  run.level = level.l;
  run.nc_trace.reserve(observations.size());
  run.filter_means.reserve(observations.size());
  for (double y : observations) {
    const auto stats = pf_step(cloud, y, model, level, rule, streams);
    run.nc_trace.push_back(stats.nc_increment);
    run.filter_means.push_back(stats.filter_mean);
    run.resample_count += stats.resampled ? 1 : 0;
    if (trace) {
      trace->time.push_back(cloud.time_index);
      trace->ess_fine.push_back(stats.ess);
      trace->ess_coarse.push_back(std::numeric_limits<double>::quiet_NaN());
      trace->alpha.push_back(std::numeric_limits<double>::quiet_NaN());
      trace->log_nc_fine.push_back(cloud.log_nc);
      trace->log_nc_coarse.push_back(std::numeric_limits<double>::quiet_NaN());
      trace->resampled.push_back(stats.resampled ? 1 : 0);
    }
  }
  run.log_nc = cloud.log_nc;
  run.cost = static_cast<std::uint64_t>(n_particles) *
             static_cast<std::uint64_t>(level.steps) * observations.size();
  return run;
}

struct CpfRun {
  int level = 0;  // fine level
  double log_nc_fine = 0.0;
  double log_nc_coarse = 0.0;
  std::vector<double> nc_trace_fine, nc_trace_coarse;
  std::vector<double> filter_increments;  // per-step fine/coarse differences
  std::uint64_t cost = 0;
  int resample_count = 0;
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();
};

inline CpfRun run_cpf(const ModelInstance& model, const Level& fine_level,
                      std::size_t n_particles, std::span<const double> observations,
                      const ResampleRule& rule, const StreamFactory& streams,
                      FilterTrace* trace = nullptr) {
  auto coupled = CoupledCloud::init(n_particles, model.diffusion_model.x0, fine_level);
  CpfRun run;
  run.level = fine_level.l;
  double alpha_sum = 0.0;
  int alpha_count = 0;
  for (double y : observations) {
    const auto stats = cpf_step(coupled, y, model, rule, streams);
    run.nc_trace_fine.push_back(stats.nc_increment_fine);
    run.nc_trace_coarse.push_back(stats.nc_increment_coarse);
    run.filter_increments.push_back(stats.increment_estimate);
    if (stats.resampled) {
      ++run.resample_count;
      alpha_sum += stats.alpha;
      ++alpha_count;
    }
    if (trace) {
      trace->time.push_back(coupled.fine.time_index);
      trace->ess_fine.push_back(stats.ess_fine);
      trace->ess_coarse.push_back(stats.ess_coarse);
      trace->alpha.push_back(stats.alpha);
      trace->log_nc_fine.push_back(coupled.fine.log_nc);
      trace->log_nc_coarse.push_back(coupled.coarse.log_nc);
      trace->resampled.push_back(stats.resampled ? 1 : 0);
    }
  }
  run.log_nc_fine = coupled.fine.log_nc;
  run.log_nc_coarse = coupled.coarse.log_nc;
  run.cost = static_cast<std::uint64_t>(n_particles) *
             static_cast<std::uint64_t>(fine_level.steps + fine_level.steps / 2) *
             observations.size();
  if (alpha_count > 0) run.mean_alpha = alpha_sum / alpha_count;
  return run;
}

}  // namespace mlpf
