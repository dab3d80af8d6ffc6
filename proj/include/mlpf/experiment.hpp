#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mlpf/config.hpp"
#include "mlpf/estimators.hpp"
#include "mlpf/filters.hpp"
#include "mlpf/models.hpp"
#include "mlpf/signed_log.hpp"

namespace mlpf {

struct ResultsRow {
  int replicate = 0;
  std::string estimator;
  int L = 0;
  SignedLog estimate;
  std::uint64_t cost = 0;
  std::int64_t wall_ms = 0;
};

struct LevelDiagnostics {
  int sweep_L = 0;  // the experiment this level ran inside (equals level for variance runs)
  int level = 0;
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();
  double mean_resamples = 0.0;
};

struct ResultsTable {
  std::vector<ResultsRow> rows;
  std::vector<LevelDiagnostics> level_diagnostics;
  std::vector<int> failed_replicates;
  int n_obs = 0;
};

// log-space c^n rescaling: log(c^n p) = log p + n log c. The MSE and
// variance comparisons all happen on these O(1) scaled values.
inline double scale_nc(double log_estimate, double c, int n) {
  if (!(c > 0.0)) throw std::invalid_argument("scale_nc: c must be > 0");
  return log_estimate + static_cast<double>(n) * std::log(c);
}

inline SignedLog scale_nc(const SignedLog& estimate, double c, int n) {
  if (estimate.is_zero()) return estimate;
  return SignedLog::from_log(scale_nc(estimate.log_abs, c, n), estimate.sign);
}

// Truth-calibrated default: c = exp(-log_p_ref / n), so the scaled truth is 1.
inline double default_scale_constant(double reference_log_evidence, int n) {
  return std::exp(-reference_log_evidence / static_cast<double>(n));
}

// Analytic cost model: level 0 contributes N_0 k_0 n, coupled level l
// contributes N_l (k_l + k_{l-1}) n.
inline std::uint64_t ml_cost(std::span<const std::int64_t> particles, int n_obs) {
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < particles.size(); ++l) {
    const std::uint64_t k_l = std::uint64_t{1} << l;
    const std::uint64_t k_prev = (l == 0) ? 0 : (std::uint64_t{1} << (l - 1));
    total += static_cast<std::uint64_t>(particles[l]) * (k_l + k_prev) *
             static_cast<std::uint64_t>(n_obs);
  }
  return total;
}

inline std::uint64_t pf_cost(std::int64_t particles, int level, int n_obs) {
  return static_cast<std::uint64_t>(particles) * (std::uint64_t{1} << level) *
         static_cast<std::uint64_t>(n_obs);
}

template <class Fn>
void parallel_for(std::size_t n_tasks, int n_threads, Fn&& fn) {
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  if (n_threads == 1 || n_tasks <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(std::min<std::size_t>(n_threads, n_tasks));
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

namespace detail {

// Stream lanes: every (experiment kind, sweep L, level) triple gets its own
// lane so runs are independent across a sweep and across modes.
inline std::uint64_t lane_ml(int sweep_L, int level) {
  return (std::uint64_t{1} << 40) | (static_cast<std::uint64_t>(sweep_L) << 16) |
         static_cast<std::uint64_t>(level);
}
inline std::uint64_t lane_single(int level) { return (std::uint64_t{2} << 40) | static_cast<std::uint64_t>(level); }
inline std::uint64_t lane_variance(int level) { return (std::uint64_t{3} << 40) | static_cast<std::uint64_t>(level); }

inline ResampleRule rule_from(const ExperimentConfig& cfg) {
  return cfg.resample == "always" ? ResampleRule::always()
                                  : ResampleRule::adaptive(cfg.resample_threshold);
}

inline std::int64_t single_pf_particles(const ExperimentConfig& cfg, int L) {
  const double n = std::ceil(cfg.pf_scale * std::ldexp(1.0, 2 * L));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(n));
}

inline std::vector<std::int64_t> ml_particles(const ExperimentConfig& cfg,
                                              const ModelInstance& model, int L) {
  if (cfg.allocation == "section4") {
    if (!cfg.epsilon)
      throw std::invalid_argument("experiment: section4 allocation needs epsilon");
    return allocate_section4(*cfg.epsilon, cfg.allocation_c).particles;
  }
  if (L == 0) return {single_pf_particles(cfg, 0)};
  const int beta = model.constant_diffusion ? 2 : 1;
  return allocate_section5(L, beta, 1).particles;
}

struct UnitResult {
  bool ok = false;
  std::string error;
  LevelEstimates estimates;      // ML units
  double single_log_nc = 0.0;    // single-PF unit
  std::uint64_t cost = 0;
  std::int64_t wall_ms = 0;
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();
  int resample_count = 0;
};

}  // namespace detail

// One experiment at a fixed L: per replicate, the ML ladder (level-0 PF plus
// L coupled filters) and/or a single-level PF at level L, reduced to one row
// per requested estimator. Replicates with a dead filter are recorded and
// excluded; more than 5% dead aborts the run.
inline ResultsTable run_experiment(const ExperimentConfig& cfg, const ModelInstance& model,
                                   std::span<const double> observations) {
  cfg.validate();
  const int n_obs = static_cast<int>(observations.size());
  const auto estimator_set = cfg.estimator_set();
  const bool want_single =
      std::find(estimator_set.begin(), estimator_set.end(), "single") != estimator_set.end();
  const bool want_ml = estimator_set.size() > (want_single ? 1u : 0u);
  const auto rule = detail::rule_from(cfg);

  int L = cfg.L;
  std::vector<std::int64_t> particles;
  if (want_ml) {
    particles = detail::ml_particles(cfg, model, L);
    L = static_cast<int>(particles.size()) - 1;  // section4 derives L from epsilon
  }
  const std::int64_t n_single = detail::single_pf_particles(cfg, L);
  const double delta = model.diffusion_model.obs_interval;

  // unit 0 = single PF, units 1..L+1 = ML level l = unit-1
  const int units_per_rep = (want_single ? 1 : 0) + (want_ml ? L + 1 : 0);
  const int R = cfg.replicates;
  std::vector<detail::UnitResult> results(static_cast<std::size_t>(R) * units_per_rep);

  auto unit_of = [&](int slot) {
    // slot within a replicate -> (is_single, level)
    if (want_single && slot == 0) return std::pair<bool, int>{true, L};
    return std::pair<bool, int>{false, slot - (want_single ? 1 : 0)};
  };

  parallel_for(results.size(), cfg.threads, [&](std::size_t task) {
    const int r = static_cast<int>(task) / units_per_rep;
    const int slot = static_cast<int>(task) % units_per_rep;
    const auto [is_single, level_idx] = unit_of(slot);
    auto& out = results[task];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (is_single) {
        StreamFactory streams{cfg.seed, static_cast<std::uint64_t>(r), detail::lane_single(L)};
        const auto run = run_pf(model, Level::of(L, delta), static_cast<std::size_t>(n_single),
                                observations, rule, streams);
        out.single_log_nc = run.log_nc;
        out.cost = run.cost;
        out.resample_count = run.resample_count;
      } else if (level_idx == 0) {
        StreamFactory streams{cfg.seed, static_cast<std::uint64_t>(r), detail::lane_ml(L, 0)};
        const auto run = run_pf(model, Level::of(0, delta),
                                static_cast<std::size_t>(particles[0]), observations, rule,
                                streams);
        out.estimates.l = 0;
        out.estimates.log_nc_fine = run.log_nc;
        out.estimates.filter_increments = run.filter_means;
        out.estimates.cost = run.cost;
        out.cost = run.cost;
        out.resample_count = run.resample_count;
      } else {
        StreamFactory streams{cfg.seed, static_cast<std::uint64_t>(r),
                              detail::lane_ml(L, level_idx)};
        const auto run = run_cpf(model, Level::of(level_idx, delta),
                                 static_cast<std::size_t>(particles[level_idx]), observations,
                                 rule, streams);
        out.estimates.l = level_idx;
        out.estimates.log_nc_fine = run.log_nc_fine;
        out.estimates.log_nc_coarse = run.log_nc_coarse;
        out.estimates.filter_increments = run.filter_increments;
        out.estimates.cost = run.cost;
        out.cost = run.cost;
        out.mean_alpha = run.mean_alpha;
        out.resample_count = run.resample_count;
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
    if (cfg.timings)
      out.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  });

  ResultsTable table;
  table.n_obs = n_obs;
  for (int r = 0; r < R; ++r) {
    bool dead = false;
    for (int s = 0; s < units_per_rep; ++s)
      if (!results[static_cast<std::size_t>(r) * units_per_rep + s].ok) dead = true;
    if (dead) table.failed_replicates.push_back(r);
  }
  if (static_cast<double>(table.failed_replicates.size()) > 0.05 * R) {
    std::string first_error;
    for (const auto& u : results)
      if (!u.ok) {
        first_error = u.error;
        break;
      }
    throw std::runtime_error("run_experiment: " + std::to_string(table.failed_replicates.size()) +
                             "/" + std::to_string(R) + " replicates died (first: " + first_error +
                             ")");
  }

  for (int r = 0; r < R; ++r) {
    if (std::find(table.failed_replicates.begin(), table.failed_replicates.end(), r) !=
        table.failed_replicates.end())
      continue;
    const auto* base = &results[static_cast<std::size_t>(r) * units_per_rep];
    std::vector<LevelEstimates> ladder;
    std::uint64_t ml_total_cost = 0;
    std::int64_t ml_wall = 0;
    if (want_ml) {
      for (int l = 0; l <= L; ++l) {
        const auto& u = base[(want_single ? 1 : 0) + l];
        ladder.push_back(u.estimates);
        ml_total_cost += u.cost;
        ml_wall += u.wall_ms;
      }
    }
    for (const auto& name : estimator_set) {
      ResultsRow row;
      row.replicate = r;
      row.estimator = name;
      row.L = L;
      if (name == "single") {
        row.estimate = SignedLog::from_log(base[0].single_log_nc);
        row.cost = base[0].cost;
        row.wall_ms = base[0].wall_ms;
      } else if (name == "ml-unbiased") {
        row.estimate = nc_ml_unbiased(ladder);
        row.cost = ml_total_cost;
        row.wall_ms = ml_wall;
      } else {
        row.estimate = SignedLog::from_log(nc_ml_biased(ladder));
        row.cost = ml_total_cost;
        row.wall_ms = ml_wall;
      }
      table.rows.push_back(std::move(row));
    }
  }

  // per-level diagnostics averaged over surviving replicates
  if (want_ml) {
    for (int l = 1; l <= L; ++l) {
      double alpha_sum = 0.0;
      int alpha_n = 0;
      double resample_sum = 0.0;
      int n_ok = 0;
      for (int r = 0; r < R; ++r) {
        const auto& u = results[static_cast<std::size_t>(r) * units_per_rep +
                                (want_single ? 1 : 0) + l];
        if (!u.ok) continue;
        ++n_ok;
        resample_sum += u.resample_count;
        if (!std::isnan(u.mean_alpha)) {
          alpha_sum += u.mean_alpha;
          ++alpha_n;
        }
      }
      LevelDiagnostics d;
      d.sweep_L = L;
      d.level = l;
      if (alpha_n > 0) d.mean_alpha = alpha_sum / alpha_n;
      if (n_ok > 0) d.mean_resamples = resample_sum / n_ok;
      table.level_diagnostics.push_back(d);
    }
  }
  return table;
}

// NC experiments across a range of L values; rows carry their L.
inline ResultsTable sweep_experiment(const ExperimentConfig& cfg, const ModelInstance& model,
                                     std::span<const double> observations, int L_min, int L_max) {
  if (L_min < 0 || L_max < L_min) throw std::invalid_argument("sweep_experiment: bad L range");
  ResultsTable table;
  table.n_obs = static_cast<int>(observations.size());
  for (int L = L_min; L <= L_max; ++L) {
    ExperimentConfig c = cfg;
    c.L = L;
    auto part = run_experiment(c, model, observations);
    for (auto& row : part.rows) table.rows.push_back(std::move(row));
    for (auto& d : part.level_diagnostics) table.level_diagnostics.push_back(d);
    for (int r : part.failed_replicates) table.failed_replicates.push_back(r);
  }
  return table;
}

// Per-level coupled runs; rows hold the level increment
// p-hat_1^l - p-hat_2^{l-1} under estimator name "increment". Levels are
// sized by the section-5 allocation at L = l_max (the strong-error-rate
// diagnostic the rate figure plots); set variance_n > 0 to force a fixed N
// per level instead.
inline ResultsTable variance_experiment(const ExperimentConfig& cfg, const ModelInstance& model,
                                        std::span<const double> observations, int l_min,
                                        int l_max) {
  cfg.validate();
  if (l_min < 1 || l_max < l_min)
    throw std::invalid_argument("variance_experiment: levels must satisfy 1 <= l_min <= l_max");
  const auto rule = detail::rule_from(cfg);
  const double delta = model.diffusion_model.obs_interval;
  const int R = cfg.replicates;
  const int n_levels = l_max - l_min + 1;
  std::vector<std::int64_t> level_particles(n_levels, cfg.variance_n);
  if (cfg.variance_n == 0) {
    const int beta = model.constant_diffusion ? 2 : 1;
    const auto alloc = allocate_section5(l_max, beta, 1).particles;
    for (int l = l_min; l <= l_max; ++l) level_particles[l - l_min] = alloc[l];
  }
  std::vector<detail::UnitResult> results(static_cast<std::size_t>(R) * n_levels);

  parallel_for(results.size(), cfg.threads, [&](std::size_t task) {
    const int r = static_cast<int>(task) / n_levels;
    const int l = l_min + static_cast<int>(task) % n_levels;
    auto& out = results[task];
    try {
      StreamFactory streams{cfg.seed, static_cast<std::uint64_t>(r), detail::lane_variance(l)};
      const auto run = run_cpf(model, Level::of(l, delta),
                               static_cast<std::size_t>(level_particles[l - l_min]),
                               observations, rule, streams);
      out.estimates.l = l;
      out.estimates.log_nc_fine = run.log_nc_fine;
      out.estimates.log_nc_coarse = run.log_nc_coarse;
      out.cost = run.cost;
      out.mean_alpha = run.mean_alpha;
      out.resample_count = run.resample_count;
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  });

  ResultsTable table;
  table.n_obs = static_cast<int>(observations.size());
  std::size_t n_failed = 0;
  for (const auto& u : results)
    if (!u.ok) ++n_failed;
  if (static_cast<double>(n_failed) > 0.05 * results.size()) {
    std::string first_error;
    for (const auto& u : results)
      if (!u.ok) {
        first_error = u.error;
        break;
      }
    throw std::runtime_error("variance_experiment: " + std::to_string(n_failed) +
                             " runs died (first: " + first_error + ")");
  }

  for (int r = 0; r < R; ++r) {
    bool any_failed = false;
    for (int l = l_min; l <= l_max; ++l)
      if (!results[static_cast<std::size_t>(r) * n_levels + (l - l_min)].ok) any_failed = true;
    if (any_failed) table.failed_replicates.push_back(r);
    for (int l = l_min; l <= l_max; ++l) {
      const auto& u = results[static_cast<std::size_t>(r) * n_levels + (l - l_min)];
      if (!u.ok) continue;
      ResultsRow row;
      row.replicate = r;
      row.estimator = "increment";
      row.L = l;
      row.estimate = SignedLog::from_log(u.estimates.log_nc_fine) -
                     SignedLog::from_log(*u.estimates.log_nc_coarse);
      row.cost = u.cost;
      table.rows.push_back(std::move(row));
    }
  }
  for (int l = l_min; l <= l_max; ++l) {
    double alpha_sum = 0.0;
    int alpha_n = 0, n_ok = 0;
    double resample_sum = 0.0;
    for (int r = 0; r < R; ++r) {
      const auto& u = results[static_cast<std::size_t>(r) * n_levels + (l - l_min)];
      if (!u.ok) continue;
      ++n_ok;
      resample_sum += u.resample_count;
      if (!std::isnan(u.mean_alpha)) {
        alpha_sum += u.mean_alpha;
        ++alpha_n;
      }
    }
    LevelDiagnostics d;
    d.sweep_L = l;
    d.level = l;
    if (alpha_n > 0) d.mean_alpha = alpha_sum / alpha_n;
    if (n_ok > 0) d.mean_resamples = resample_sum / n_ok;
    table.level_diagnostics.push_back(d);
  }
  return table;
}

}  // namespace mlpf
