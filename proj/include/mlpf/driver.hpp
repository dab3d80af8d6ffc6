#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mlpf/config.hpp"
#include "mlpf/data.hpp"
#include "mlpf/experiment.hpp"
#include "mlpf/kalman.hpp"
#include "mlpf/output.hpp"
#include "mlpf/reference.hpp"

namespace mlpf {

inline ModelInstance model_from_config(const ExperimentConfig& cfg) {
  return make_model(cfg.model, cfg.active_overrides(), cfg.nlm_family());
}

inline std::vector<double> load_or_generate_data(const ExperimentConfig& cfg,
                                                 const ModelInstance& model) {
  if (cfg.data == "generate") return generate_data(model, cfg.n_obs, cfg.seed, cfg.sim_level);
  return read_observations_csv(cfg.data);
}

struct TruthInfo {
  double log_evidence = 0.0;
  std::string source;  // "kalman-exact" or the reference cache description
  std::vector<double> filter_means;
};

// Exact Kalman truth for OU/GBM; a cached high-level reference filter for
// Langevin/NLM.
inline TruthInfo compute_truth(const ExperimentConfig& cfg, const ModelInstance& model,
                               std::span<const double> observations, int max_level,
                               const std::filesystem::path& cache_dir) {
  TruthInfo truth;
  if (model.name() == "ou") {
    const auto ssm =
        exact_ou_ssm(model.constant("theta"), model.constant("mu"), model.constant("sigma"),
                     model.constant("tau2"), model.constant("delta"), model.constant("x0"));
    const auto run = run_kalman(ssm, observations);
    truth.log_evidence = run.log_evidence;
    truth.filter_means = run.means;
    truth.source = "kalman-exact";
    return truth;
  }
  if (model.name() == "gbm") {
    const auto ssm = gbm_log_ssm(model.constant("mu"), model.constant("sigma"),
                                 model.constant("tau2"), model.constant("delta"),
                                 model.constant("x0"));
    const auto run = run_kalman(ssm, observations);
    truth.log_evidence = run.log_evidence;
    truth.filter_means.reserve(run.means.size());
    for (std::size_t k = 0; k < run.means.size(); ++k)
      truth.filter_means.push_back(lognormal_mean(run.means[k], run.variances[k]));
    truth.source = "kalman-exact-log-space";
    return truth;
  }
  const auto ref = reference_pf(model, cfg.reference_level, cfg.reference_particles,
                                cfg.reference_seed, observations, max_level, cache_dir);
  truth.log_evidence = ref.log_evidence;
  truth.filter_means = ref.filter_means;
  truth.source = "reference-pf level=" + std::to_string(ref.level) +
                 " n=" + std::to_string(ref.n_particles) + " seed=" + std::to_string(ref.seed);
  return truth;
}

// Cheap scale calibration for variance-rate runs: any constant independent
// of the measured samples works (slopes are c-invariant), so a moderate
// dedicated-seed PF run is enough.
inline double calibration_log_evidence(const ExperimentConfig& cfg, const ModelInstance& model,
                                       std::span<const double> observations, int level) {
  StreamFactory streams{cfg.reference_seed ^ 0x5bf03635ull, 0,
                        detail::lane_single(level) ^ 0xff};
  const auto run = run_pf(model, Level::of(level, model.diffusion_model.obs_interval), 4000,
                          observations, ResampleRule::adaptive(), streams);
  return run.log_nc;
}

inline void write_run_meta(const std::filesystem::path& path, const ExperimentConfig& cfg,
                           const TruthInfo& truth, double c, const ResultsTable& table) {
  auto out = detail::open_out(path);
  out << "mlpf-run-meta v1\n";
  out << "truth_source=" << truth.source << "\n";
  out << "truth_log_evidence=" << detail::fmt17(truth.log_evidence) << "\n";
  out << "c_scale_used=" << detail::fmt17(c) << "\n";
  out << "n_obs=" << table.n_obs << "\n";
  out << "rows=" << table.rows.size() << "\n";
  out << "failed_replicates=" << table.failed_replicates.size() << "\n";
  out << "--- config ---\n";
  out << cfg.serialize();
}

}  // namespace mlpf
