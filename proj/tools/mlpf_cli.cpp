// Command-line harness: data generation, experiment runs/sweeps, rate fits
// and oracle/reference truth computation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mlpf/driver.hpp"
#include "mlpf/mlpf.hpp"
#include "mlpf/rates.hpp"

namespace fs = std::filesystem;
using namespace mlpf;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::string> model, estimator, resample, out, data;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates, threads;
  std::optional<std::string> levels;  // "L" or "min:max"
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "flat key=value config file");
  cmd->add_option("--model", flags.model, "ou|gbm|langevin|nlm");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--levels", flags.levels, "level L, or range min:max for sweep");
  cmd->add_option("--replicates", flags.replicates, "independent repetitions");
  cmd->add_option("--estimator", flags.estimator,
                  "comma list of single|ml-unbiased|ml-biased|all");
  cmd->add_option("--resample", flags.resample, "always|adaptive");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--data", flags.data, "observations CSV (default: generate)");
  cmd->add_option("--threads", flags.threads, "worker threads (0 = hardware)");
}

std::pair<int, int> parse_level_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const int l = std::stoi(text);
    return {l, l};
  }
  return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
}

ExperimentConfig build_config(const CommonFlags& flags) {
  ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = ExperimentConfig::parse_file(flags.config_path);
  if (flags.model) cfg.model = *flags.model;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.replicates) cfg.replicates = *flags.replicates;
  if (flags.estimator) cfg.set_key("estimators", *flags.estimator);
  if (flags.resample) cfg.resample = *flags.resample;
  if (flags.out) cfg.out = *flags.out;
  if (flags.data) cfg.data = *flags.data;
  if (flags.threads) cfg.threads = *flags.threads;
  if (flags.levels) cfg.L = parse_level_range(*flags.levels).first;
  cfg.validate();
  return cfg;
}

// Sweep + rates + outputs; shared by `run` (single L) and `sweep`.
int run_and_emit(const ExperimentConfig& cfg, int l_min, int l_max, const std::string& mode) {
  const auto model = model_from_config(cfg);
  const auto observations = load_or_generate_data(cfg, model);
  const fs::path out_dir = cfg.out;
  const fs::path cache_dir = out_dir / "cache";

  ResultsTable table;
  if (mode == "variance") {
    table = variance_experiment(cfg, model, observations, std::max(1, l_min), l_max);
  } else {
    table = sweep_experiment(cfg, model, observations, l_min, l_max);
  }

  TruthInfo truth;
  if (mode == "variance") {
    truth.log_evidence = calibration_log_evidence(cfg, model, observations, std::min(l_max, 7));
    truth.source = "calibration-pf";
  } else {
    truth = compute_truth(cfg, model, observations, l_max, cache_dir);
  }
  const double c = cfg.c_scale ? *cfg.c_scale
                               : default_scale_constant(truth.log_evidence, table.n_obs);

  std::map<std::string, RateFit> fits;
  try {
    if (mode == "variance") {
      const auto [vars, levels] = increment_variances(table, std::log(c));
      fits["increment"] = estimate_variance_rate(vars, levels);
    } else if (l_max - l_min >= 2) {
      fits = estimate_cost_rate(table, truth.log_evidence, std::log(c));
    }
  } catch (const std::exception& e) {
    std::cerr << "rate fit skipped: " << e.what() << "\n";
  }

  emit_outputs(table, fits, out_dir);
  write_run_meta(out_dir / "run_meta.txt", cfg, truth, c, table);
  std::cout << "wrote " << (out_dir / "results.csv").string() << " (" << table.rows.size()
            << " rows)\n";
  for (const auto& [name, fit] : fits)
    std::printf("%-12s slope %+.4f  (r2 %.4f, %zu points)\n", name.c_str(), fit.slope, fit.r2,
                fit.points.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilevel particle filter: filtering and normalizing-constant experiments"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "simulate observations and write CSV");
  CommonFlags gen_flags;
  add_common(generate, gen_flags);
  int gen_n = 100;
  int gen_sim_level = 12;
  std::string gen_out_file = "observations.csv";
  generate->add_option("--n", gen_n, "number of observations");
  generate->add_option("--sim-level", gen_sim_level, "latent-path discretization level");
  generate->add_option("--out-file", gen_out_file, "output CSV path");

  // run
  auto* run = app.add_subcommand("run", "single experiment at one level L");
  CommonFlags run_flags;
  add_common(run, run_flags);
  bool run_trace = false;
  run->add_flag("--trace", run_trace, "write per-step filter diagnostics (replicate 0)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "experiments across a range of L");
  CommonFlags sweep_flags;
  add_common(sweep, sweep_flags);
  std::string sweep_mode = "nc";
  sweep->add_option("--mode", sweep_mode, "nc (estimators) or variance (level increments)");

  // rates
  auto* rates = app.add_subcommand("rates", "fit rates from an existing results.csv");
  std::string rates_results, rates_kind = "cost", rates_out = "out";
  std::optional<std::string> rates_truth_file;
  std::optional<double> rates_truth_log, rates_c;
  int rates_n_obs = 0;
  rates->add_option("--results", rates_results, "results.csv path")->required();
  rates->add_option("--n-obs", rates_n_obs, "observation count behind the results")->required();
  rates->add_option("--truth-file", rates_truth_file, "reference/oracle container file");
  rates->add_option("--truth-log", rates_truth_log, "log evidence of the truth");
  rates->add_option("--c", rates_c, "scaling constant c (default truth-calibrated)");
  rates->add_option("--kind", rates_kind, "cost|variance");
  rates->add_option("--out", rates_out, "output directory");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "compute Kalman or reference-filter truth");
  CommonFlags oracle_flags;
  add_common(oracle, oracle_flags);
  std::string oracle_out_file = "truth.txt";
  int oracle_max_level = 0;
  oracle->add_option("--out-file", oracle_out_file, "truth container path");
  oracle->add_option("--max-level", oracle_max_level,
                     "highest experiment level this truth will serve");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      auto cfg = build_config(gen_flags);
      cfg.n_obs = gen_n;
      cfg.sim_level = gen_sim_level;
      const auto model = model_from_config(cfg);
      const auto observations = generate_data(model, cfg.n_obs, cfg.seed, cfg.sim_level);
      write_observations_csv(observations, gen_out_file);
      std::cout << "wrote " << gen_out_file << " (" << observations.size() << " observations)\n";
      return 0;
    }
    if (run->parsed()) {
      const auto cfg = build_config(run_flags);
      const int rc = run_and_emit(cfg, cfg.L, cfg.L, "nc");
      if (run_trace && rc == 0) {
        const auto model = model_from_config(cfg);
        const auto observations = load_or_generate_data(cfg, model);
        const auto rule = cfg.resample == "always"
                              ? ResampleRule::always()
                              : ResampleRule::adaptive(cfg.resample_threshold);
        const auto particles = cfg.L >= 1
                                   ? allocate_section5(cfg.L, model.constant_diffusion ? 2 : 1, 1)
                                         .particles
                                   : std::vector<std::int64_t>{64};
        FilterTrace trace;
        StreamFactory streams{cfg.seed, 0, detail::lane_ml(cfg.L, cfg.L)};
        if (cfg.L >= 1) {
          run_cpf(model, Level::of(cfg.L, model.diffusion_model.obs_interval),
                  particles.back(), observations, rule, streams, &trace);
        } else {
          run_pf(model, Level::of(0, model.diffusion_model.obs_interval), particles.back(),
                 observations, rule, streams, &trace);
        }
        emit_trace_csv(trace, cfg.L, fs::path(cfg.out) / "trace.csv");
        std::cout << "wrote " << (fs::path(cfg.out) / "trace.csv").string() << "\n";
      }
      return rc;
    }
    if (sweep->parsed()) {
      const auto cfg = build_config(sweep_flags);
      int l_min = 1, l_max = cfg.L;
      if (sweep_flags.levels) std::tie(l_min, l_max) = parse_level_range(*sweep_flags.levels);
      return run_and_emit(cfg, l_min, l_max, sweep_mode);
    }
    if (rates->parsed()) {
      double log_truth = 0.0;
      if (rates_truth_file) log_truth = read_reference(*rates_truth_file).log_evidence;
      else if (rates_truth_log) log_truth = *rates_truth_log;
      else if (rates_kind == "cost")
        throw std::runtime_error("rates --kind cost needs --truth-file or --truth-log");
      const auto table = read_results_csv(rates_results, rates_n_obs);
      const double c = rates_c ? *rates_c : default_scale_constant(log_truth, rates_n_obs);
      std::map<std::string, RateFit> fits;
      if (rates_kind == "variance") {
        const auto [vars, levels] = increment_variances(table, std::log(c));
        fits["increment"] = estimate_variance_rate(vars, levels);
      } else {
        fits = estimate_cost_rate(table, log_truth, std::log(c));
      }
      emit_rates_csv(fits, fs::path(rates_out) / "rates.csv");
      for (const auto& [name, fit] : fits)
        std::printf("%-12s slope %+.4f  (r2 %.4f)\n", name.c_str(), fit.slope, fit.r2);
      return 0;
    }
    if (oracle->parsed()) {
      const auto cfg = build_config(oracle_flags);
      const auto model = model_from_config(cfg);
      const auto observations = load_or_generate_data(cfg, model);
      const int max_level = oracle_max_level > 0 ? oracle_max_level : cfg.L;
      const auto truth =
          compute_truth(cfg, model, observations, max_level, fs::path(cfg.out) / "cache");
      ReferenceRun container;
      container.model = model.name();
      container.level = truth.source.rfind("kalman", 0) == 0 ? -1 : cfg.reference_level;
      container.n_particles =
          truth.source.rfind("kalman", 0) == 0 ? 0 : cfg.reference_particles;
      container.seed = cfg.reference_seed;
      container.log_evidence = truth.log_evidence;
      container.filter_means = truth.filter_means;
      write_reference(container, oracle_out_file);
      std::cout << "truth (" << truth.source << "): log evidence "
                << detail::fmt17(truth.log_evidence) << " -> " << oracle_out_file << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
