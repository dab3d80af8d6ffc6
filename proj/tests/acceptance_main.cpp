// Acceptance suite: one criterion per subcommand, each printing a PASS/FAIL
// line. Run `acceptance <n>` for criterion n, or `acceptance all`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mlpf/driver.hpp"
#include "mlpf/mlpf.hpp"

#include "support/test_stats.hpp"

using namespace mlpf;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::string label;
  bool ok;
};

std::vector<Check> g_checks;

void check(bool ok, const std::string& label) { g_checks.push_back({label, ok}); }

void check_close(double value, double target, double tolerance, const std::string& label) {
  std::ostringstream ss;
  ss << label << " (value " << value << ", target " << target << ", tol " << tolerance << ")";
  check(std::abs(value - target) <= tolerance, ss.str());
}

void check_in(double value, double lo, double hi, const std::string& label) {
  std::ostringstream ss;
  ss << label << " (value " << value << ", band [" << lo << ", " << hi << "])";
  check(value >= lo && value <= hi, ss.str());
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "mlpf_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- criterion 1
// Coupling exactness: the coupled-resampling marginal identity as arithmetic
// on 1000 random weight pairs, and chi-square gates on the empirical index
// marginals with 1e5 draws.
void criterion_1() {
  RngStream weight_rng(derive_stream_key({2024, 1}));
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + (weight_rng.next_u64() % 30);
    std::vector<double> lf(n), lc(n);
    for (std::size_t j = 0; j < n; ++j) {
      lf[j] = 8.0 * weight_rng.next_uniform() - 4.0;
      lc[j] = 8.0 * weight_rng.next_uniform() - 4.0;
    }
    const auto wf = normalize_weights(lf);
    const auto wc = normalize_weights(lc);
    double alpha = 0.0;
    for (std::size_t j = 0; j < n; ++j) alpha += std::min(wf[j], wc[j]);
    for (std::size_t j = 0; j < n; ++j) {
      const double overlap = std::min(wf[j], wc[j]);
      const double fine = alpha * (overlap / alpha) +
                          (1.0 - alpha) * ((wf[j] - overlap) / (1.0 - alpha));
      const double coarse = alpha * (overlap / alpha) +
                            (1.0 - alpha) * ((wc[j] - overlap) / (1.0 - alpha));
      worst = std::max({worst, std::abs(fine - wf[j]), std::abs(coarse - wc[j])});
    }
  }
  check(worst <= 1e-12, "marginal identity exact to 1e-12 on 1000 random pairs (worst " +
                            std::to_string(worst) + ")");

  RngStream draw_rng(derive_stream_key({2024, 2}));
  for (int config = 0; config < 3; ++config) {
    const std::size_t cells = 6 + 3 * config;
    std::vector<double> lf(cells), lc(cells);
    for (std::size_t j = 0; j < cells; ++j) {
      lf[j] = 2.0 * draw_rng.next_uniform();
      lc[j] = 2.0 * draw_rng.next_uniform();
    }
    const auto wf = normalize_weights(lf);
    const auto wc = normalize_weights(lc);
    const std::size_t n_draws = 100000;
    const auto rs = coupled_resample(wf, wc, draw_rng, n_draws);
    std::vector<std::size_t> counts_f(cells, 0), counts_c(cells, 0);
    for (std::size_t i = 0; i < n_draws; ++i) {
      ++counts_f[rs.fine_idx[i]];
      ++counts_c[rs.coarse_idx[i]];
    }
    const double pf = test_stats::chi_square_gof_pvalue(counts_f, wf);
    const double pc = test_stats::chi_square_gof_pvalue(counts_c, wc);
    check(pf > 1e-3, "fine marginal chi-square p > 1e-3 (p " + std::to_string(pf) + ")");
    check(pc > 1e-3, "coarse marginal chi-square p > 1e-3 (p " + std::to_string(pc) + ")");
  }
}

// ---------------------------------------------------------------- criterion 2
// Evidence unbiasedness on OU with always-resample over 500 replicates:
// single filters against the exact level evidence, and the ML unbiased
// estimator at L = 3 against the level-3 evidence.
void criterion_2() {
  const auto m = ou_model();
  const auto ys = generate_data(m, 10, 1001, 10);

  for (int l : {0, 2}) {
    const auto level = Level::of(l, 0.5);
    const double truth =
        std::exp(run_kalman(euler_ou_ssm(1.0, 0.0, 0.5, 0.2, level, 0.0), ys).log_evidence);
    const int reps = 500;
    std::vector<double> estimates(reps);
    parallel_for(reps, 0, [&](std::size_t r) {
      StreamFactory streams{1002, r, static_cast<std::uint64_t>(l)};
      estimates[r] =
          std::exp(run_pf(m, level, 10000, ys, ResampleRule::always(), streams).log_nc);
    });
    const double se = test_stats::standard_error(estimates);
    check_close(test_stats::mean(estimates), truth, 3.0 * se,
                "single-filter evidence unbiased at level " + std::to_string(l));
  }

  const int L = 3;
  const auto particles = allocate_section5(L, 2, 1).particles;
  const double truth3 =
      std::exp(run_kalman(euler_ou_ssm(1.0, 0.0, 0.5, 0.2, Level::of(L, 0.5), 0.0), ys)
                   .log_evidence);
  const int reps = 500;
  std::vector<double> estimates(reps);
  parallel_for(reps, 0, [&](std::size_t r) {
    std::vector<LevelEstimates> ladder;
    {
      StreamFactory streams{1003, r, 0};
      const auto run = run_pf(m, Level::of(0, 0.5), particles[0], ys, ResampleRule::always(),
                              streams);
      ladder.push_back({0, run.log_nc, std::nullopt, {}, run.cost});
    }
    for (int l = 1; l <= L; ++l) {
      StreamFactory streams{1003, r, static_cast<std::uint64_t>(l)};
      const auto run = run_cpf(m, Level::of(l, 0.5), particles[l], ys, ResampleRule::always(),
                               streams);
      ladder.push_back({l, run.log_nc_fine, run.log_nc_coarse, {}, run.cost});
    }
    estimates[r] = nc_ml_unbiased(ladder).value();
  });
  const double se = test_stats::standard_error(estimates);
  check_close(test_stats::mean(estimates), truth3, 3.0 * se,
              "ML unbiased estimator matches level-3 evidence (L=3)");
}

// ---------------------------------------------------------------- criterion 3
// Coupled-kernel marginals: KS tests of the fine/coarse outputs of the
// coupled transition against the matching single-level Euler laws, OU and
// NLM at l in {2, 4}, 1e5 samples.
void criterion_3() {
  const int n = 100000;
  for (const char* name : {"ou", "nlm"}) {
    const auto m = make_model(name);
    const double x0 = m.diffusion_model.x0;
    const double delta = m.diffusion_model.obs_interval;
    for (int l : {2, 4}) {
      const auto level = Level::of(l, delta);
      std::vector<double> fine(n), coarse(n), single_f(n), single_c(n);
      StreamFactory cs{1101, 0, static_cast<std::uint64_t>(l)};
      StreamFactory fsx{1102, 0, static_cast<std::uint64_t>(l)};
      StreamFactory csx{1103, 0, static_cast<std::uint64_t>(l)};
      parallel_for(n, 0, [&](std::size_t i) {
        auto xi = cs.propagate(i, 0);
        const auto [xf, xc] =
            coupled_euler_transition(m.diffusion_model, level, x0, x0, xi);
        fine[i] = xf;
        coarse[i] = xc;
        auto xi_f = fsx.propagate(i, 0);
        single_f[i] = euler_transition(m.diffusion_model, level, x0, xi_f);
        auto xi_c = csx.propagate(i, 0);
        single_c[i] = euler_transition(m.diffusion_model, level.coarser(), x0, xi_c);
      });
      const double p_fine = test_stats::ks_two_sample_pvalue(fine, single_f);
      const double p_coarse = test_stats::ks_two_sample_pvalue(coarse, single_c);
      std::ostringstream label;
      label << name << " l=" << l;
      check(p_fine > 1e-3, label.str() + " fine KS p > 1e-3 (p " + std::to_string(p_fine) + ")");
      check(p_coarse > 1e-3,
            label.str() + " coarse KS p > 1e-3 (p " + std::to_string(p_coarse) + ")");
    }
  }
}

// ---------------------------------------------------------------- criterion 4
// Variance rates of the level increments p-hat_1^l - p-hat_2^{l-1} over
// l = 1..6 at n = 100.
void criterion_4() {
  struct Row {
    const char* model;
    double lo, hi;
  };
  const Row rows[] = {
      {"ou", 0.7, 1.3}, {"langevin", 0.7, 1.3}, {"gbm", 0.25, 0.75}, {"nlm", 0.25, 0.75}};
  for (const auto& row : rows) {
    ExperimentConfig cfg;
    cfg.model = row.model;
    cfg.n_obs = 100;
    cfg.replicates = 200;
    cfg.seed = 23;
    cfg.resample = "always";
    cfg.variance_n = 2048;
    const auto model = model_from_config(cfg);
    const auto ys = load_or_generate_data(cfg, model);
    const auto table = variance_experiment(cfg, model, ys, 1, 6);
    const double log_c = -calibration_log_evidence(cfg, model, ys, 6) / cfg.n_obs;
    const auto [vars, levels] = increment_variances(table, log_c);
    const auto fit = estimate_variance_rate(vars, levels);
    check_in(fit.slope, row.lo, row.hi,
             std::string(row.model) + " variance-rate slope (r2 " + std::to_string(fit.r2) + ")");
  }
}

// ---------------------------------------------------------------- criterion 5
// Cost-rate ordering on the desk-scale sweep: L = 1..6, R = 20, n = 1000.
void criterion_5() {
  const auto dir = work_dir() / "criterion5";
  fs::create_directories(dir);
  struct Fits {
    double pf, ml_unbiased, ml_biased;
  };
  std::map<std::string, Fits> fits;
  for (const char* name : {"ou", "gbm", "langevin", "nlm"}) {
    ExperimentConfig cfg;
    cfg.model = name;
    cfg.n_obs = 1000;
    cfg.replicates = 20;
    cfg.seed = 31;
    cfg.estimators = {"all"};
    cfg.resample = "adaptive";
    cfg.reference_level = 7;
    cfg.reference_particles = 30000;
    cfg.out = (dir / name).string();
    const auto model = model_from_config(cfg);
    const auto ys = load_or_generate_data(cfg, model);
    const auto truth = compute_truth(cfg, model, ys, 6, dir / name / "cache");
    const auto table = sweep_experiment(cfg, model, ys, 1, 6);
    const double log_c = -truth.log_evidence / cfg.n_obs;
    const auto rate_fits = estimate_cost_rate(table, truth.log_evidence, log_c);
    emit_outputs(table, rate_fits, dir / name);
    for (const auto& est : {"single", "ml-unbiased", "ml-biased"}) {
      const auto pts = cost_rate_points(table, est, truth.log_evidence, log_c);
      std::printf("    %-9s %-12s MSE by L:", name, est);
      for (const auto& pt : pts) std::printf(" %.2e", pt.mse);
      std::printf("\n");
    }
    fits[name] = {rate_fits.at("single").slope, rate_fits.at("ml-unbiased").slope,
                  rate_fits.at("ml-biased").slope};
    std::printf("    %-9s PF %+.3f  MLPF(unbiased) %+.3f  MLPF(biased) %+.3f\n", name,
                fits[name].pf, fits[name].ml_unbiased, fits[name].ml_biased);
  }
  check_in(fits["ou"].pf, -1.8, -1.3, "OU PF cost-rate slope");
  check_in(fits["ou"].ml_unbiased, -1.45, -0.9, "OU MLPF unbiased cost-rate slope");
  check_in(fits["ou"].ml_biased, -1.45, -0.9, "OU MLPF biased cost-rate slope");
  for (const char* name : {"ou", "gbm", "langevin", "nlm"}) {
    check(fits[name].ml_unbiased > fits[name].pf,
          std::string(name) + " MLPF unbiased shallower than PF");
    check(fits[name].ml_biased > fits[name].pf,
          std::string(name) + " MLPF biased shallower than PF");
  }

  // Diagnostic only (not gated): the same sweep at n = 100, where the
  // evidence estimates are statistically resolved at these particle counts.
  std::printf("    -- diagnostic, not gated: same sweep at n = 100 --\n");
  for (const char* name : {"ou", "gbm", "langevin", "nlm"}) {
    ExperimentConfig cfg;
    cfg.model = name;
    cfg.n_obs = 100;
    cfg.replicates = 20;
    cfg.seed = 31;
    cfg.estimators = {"all"};
    cfg.resample = "adaptive";
    cfg.reference_level = 7;
    cfg.reference_particles = 30000;
    const auto model = model_from_config(cfg);
    const auto ys = load_or_generate_data(cfg, model);
    const auto truth = compute_truth(cfg, model, ys, 6, dir / name / "cache100");
    const auto table = sweep_experiment(cfg, model, ys, 1, 6);
    const auto rate_fits =
        estimate_cost_rate(table, truth.log_evidence, -truth.log_evidence / cfg.n_obs);
    std::printf("    %-9s PF %+.3f  MLPF(unbiased) %+.3f  MLPF(biased) %+.3f\n", name,
                rate_fits.at("single").slope, rate_fits.at("ml-unbiased").slope,
                rate_fits.at("ml-biased").slope);
  }
}

// ---------------------------------------------------------------- criterion 6
// Biased-estimator consistency: quadrupling every N_l strictly shrinks the
// gap between the replicate mean and the level-3 evidence.
void criterion_6() {
  const auto m = ou_model();
  const auto ys = generate_data(m, 10, 1201, 10);
  const int L = 3;
  const double truth =
      std::exp(run_kalman(euler_ou_ssm(1.0, 0.0, 0.5, 0.2, Level::of(L, 0.5), 0.0), ys)
                   .log_evidence);
  auto mean_estimate = [&](const std::vector<std::int64_t>& particles, std::uint64_t seed) {
    const int reps = 500;
    std::vector<double> estimates(reps);
    parallel_for(reps, 0, [&](std::size_t r) {
      std::vector<LevelEstimates> ladder;
      {
        StreamFactory streams{seed, r, 0};
        const auto run = run_pf(m, Level::of(0, 0.5), particles[0], ys, ResampleRule::always(),
                                streams);
        ladder.push_back({0, run.log_nc, std::nullopt, {}, run.cost});
      }
      for (int l = 1; l <= L; ++l) {
        StreamFactory streams{seed, r, static_cast<std::uint64_t>(l)};
        const auto run = run_cpf(m, Level::of(l, 0.5), particles[l], ys,
                                 ResampleRule::always(), streams);
        ladder.push_back({l, run.log_nc_fine, run.log_nc_coarse, {}, run.cost});
      }
      estimates[r] = std::exp(nc_ml_biased(ladder));
    });
    return test_stats::mean(estimates);
  };
  const std::vector<std::int64_t> base = {24, 12, 6, 3};
  std::vector<std::int64_t> quadrupled;
  for (auto n : base) quadrupled.push_back(4 * n);
  const double err_base = std::abs(mean_estimate(base, 1202) - truth);
  const double err_quad = std::abs(mean_estimate(quadrupled, 1203) - truth);
  std::ostringstream label;
  label << "biased-estimator error shrinks with 4x particles (" << err_base << " -> "
        << err_quad << ")";
  check(err_quad < err_base, label.str());
}

// ---------------------------------------------------------------- criterion 7
// Allocation formulas against hand-computed tables.
void criterion_7() {
  check(allocate_section5(1, 1, 1).particles == std::vector<std::int64_t>{4, 2},
        "section5 (L=1, beta=1, gamma=1) = (4, 2)");
  check(allocate_section5(2, 2, 1).particles == std::vector<std::int64_t>{32, 16, 8},
        "section5 (L=2, beta=2, gamma=1) = (32, 16, 8)");
  check(allocate_section5(3, 1, 1).particles == std::vector<std::int64_t>{107, 64, 38, 22},
        "section5 (L=3, beta=1, gamma=1) = (107, 64, 38, 22)");
  const auto a = allocate_section4(0.5, 1.0);
  check(a.L == 1 && a.particles == std::vector<std::int64_t>{8, 5},
        "section4 (eps=0.5, C=1) = L1, (8, 5)");
  // spot invariants: monotone non-increasing, floors clamped at 1
  const auto b = allocate_section5(8, 1, 1);
  bool monotone = true;
  for (std::size_t l = 1; l < b.particles.size(); ++l)
    monotone = monotone && b.particles[l] <= b.particles[l - 1];
  check(monotone, "section5 counts monotone non-increasing at L=8");
  const auto tiny = allocate_section4(0.9, 1e-9);
  bool clamped = true;
  for (auto n : tiny.particles) clamped = clamped && n == 1;
  check(clamped, "section4 floors clamp at 1");
}

// ---------------------------------------------------------------- criterion 8
// Determinism: identical config and seed produce byte-identical results.csv
// at 1 and 8 worker threads.
void criterion_8() {
  const auto dir = work_dir() / "criterion8";
  fs::create_directories(dir);
  ExperimentConfig cfg;
  cfg.model = "ou";
  cfg.n_obs = 50;
  cfg.L = 2;
  cfg.replicates = 8;
  cfg.estimators = {"all"};
  cfg.seed = 99;
  const auto model = model_from_config(cfg);
  const auto ys = load_or_generate_data(cfg, model);

  auto run_with_threads = [&](int threads, const fs::path& csv) {
    ExperimentConfig c = cfg;
    c.threads = threads;
    const auto table = run_experiment(c, model, ys);
    emit_results_csv(table, csv);
    std::ifstream in(csv, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto bytes1 = run_with_threads(1, dir / "results_t1.csv");
  const auto bytes8 = run_with_threads(8, dir / "results_t8.csv");
  check(!bytes1.empty() && bytes1 == bytes8,
        "results.csv byte-identical at 1 and 8 worker threads");
}

int run_criterion(int n) {
  static const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
      {"coupled-resampling exactness", criterion_1},
      {"evidence unbiasedness (OU, 500 replicates)", criterion_2},
      {"coupled-kernel marginal laws (KS)", criterion_3},
      {"level-increment variance rates", criterion_4},
      {"cost-rate ordering (desk-scale sweep)", criterion_5},
      {"biased-estimator consistency", criterion_6},
      {"allocation formulas", criterion_7},
      {"determinism across worker threads", criterion_8},
  };
  const auto& [name, fn] = criteria.at(n - 1);
  g_checks.clear();
  const auto t0 = std::chrono::steady_clock::now();
  bool threw = false;
  std::string error;
  try {
    fn();
  } catch (const std::exception& e) {
    threw = true;
    error = e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = !threw;
  for (const auto& c : g_checks) ok = ok && c.ok;
  std::printf("[%d] %s: %s (%.1f s)\n", n, name.c_str(), ok ? "PASS" : "FAIL", secs);
  for (const auto& c : g_checks)
    if (!c.ok || std::getenv("MLPF_ACCEPTANCE_VERBOSE"))
      std::printf("    %s %s\n", c.ok ? "ok  " : "FAIL", c.label.c_str());
  if (threw) std::printf("    exception: %s\n", error.c_str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <1..8|all>\n");
    return 2;
  }
  if (std::strcmp(argv[1], "all") == 0) {
    int failures = 0;
    for (int n = 1; n <= 8; ++n) failures += run_criterion(n);
    std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASS" : "SOME CRITERIA FAILED");
    return failures == 0 ? 0 : 1;
  }
  const int n = std::atoi(argv[1]);
  if (n < 1 || n > 8) {
    std::fprintf(stderr, "usage: acceptance <1..8|all>\n");
    return 2;
  }
  return run_criterion(n);
}
