#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlpf/level.hpp"
#include "mlpf/models.hpp"

namespace mlpf {

// Scalar linear-Gaussian state space model:
//   x' = F x + u + N(0, Q),   y = H x' + r + N(0, R)
struct LinearGaussianSSM {
  double F = 1.0, u = 0.0, Q = 0.0;
  double H = 1.0, r = 0.0, R = 1.0;
  double m0 = 0.0, P0 = 0.0;

  void validate() const {
    if (!(Q >= 0.0)) throw std::invalid_argument("LinearGaussianSSM: Q must be >= 0");
    if (!(R > 0.0)) throw std::invalid_argument("LinearGaussianSSM: R must be > 0");
    if (!(P0 >= 0.0)) throw std::invalid_argument("LinearGaussianSSM: P0 must be >= 0");
  }
};

struct KalmanState {
  double mean = 0.0;
  double variance = 0.0;
  double log_evidence = 0.0;

  static KalmanState init(const LinearGaussianSSM& ssm) {
    ssm.validate();
    return {ssm.m0, ssm.P0, 0.0};
  }
};

// Predict, accumulate the prediction-error evidence term, update.
inline KalmanState kalman_step(const KalmanState& state, const LinearGaussianSSM& ssm, double y) {
  const double m_pred = ssm.F * state.mean + ssm.u;
  const double p_pred = ssm.F * ssm.F * state.variance + ssm.Q;
  const double innov_var = ssm.H * ssm.H * p_pred + ssm.R;
  if (!(innov_var > 0.0))
    throw std::domain_error("kalman_step: non-positive innovation variance");
  const double innov = y - (ssm.H * m_pred + ssm.r);
  KalmanState next;
  next.log_evidence = state.log_evidence + gaussian_log_density(y, ssm.H * m_pred + ssm.r, innov_var);
  const double gain = p_pred * ssm.H / innov_var;
  next.mean = m_pred + gain * innov;
  next.variance = (1.0 - gain * ssm.H) * p_pred;
  return next;
}

struct KalmanRun {
  std::vector<double> means;      // posterior mean after each observation
  std::vector<double> variances;
  double log_evidence = 0.0;
};

inline KalmanRun run_kalman(const LinearGaussianSSM& ssm, std::span<const double> observations) {
  auto state = KalmanState::init(ssm);
  KalmanRun run;
  run.means.reserve(observations.size());
  run.variances.reserve(observations.size());
  for (double y : observations) {
    state = kalman_step(state, ssm, y);
    run.means.push_back(state.mean);
    run.variances.push_back(state.variance);
  }
  run.log_evidence = state.log_evidence;
  return run;
}

// Exact OU transition over one observation interval:
// F = e^{-theta delta}, u = mu (1 - F), Q = sigma^2 (1 - e^{-2 theta delta}) / (2 theta).
inline LinearGaussianSSM exact_ou_ssm(double theta, double mu, double sigma, double tau2,
                                      double delta, double x0) {
  if (!(theta > 0.0)) throw std::invalid_argument("exact_ou_ssm: theta must be > 0");
  LinearGaussianSSM ssm;
  ssm.F = std::exp(-theta * delta);
  ssm.u = mu * (1.0 - ssm.F);
  ssm.Q = sigma * sigma * (1.0 - std::exp(-2.0 * theta * delta)) / (2.0 * theta);
  ssm.H = 1.0;
  ssm.r = 0.0;
  ssm.R = tau2;
  ssm.m0 = x0;
  ssm.P0 = 0.0;
  ssm.validate();
  return ssm;
}

// Exact law of the level-l Euler chain for OU, composing k_l linear steps
// x' = (1 - h theta) x + h theta mu + sigma sqrt(h) xi. Gives the exact
// p^l(y_{1:n}) that the level-l filter estimates unbiasedly.
inline LinearGaussianSSM euler_ou_ssm(double theta, double mu, double sigma, double tau2,
                                      const Level& level, double x0) {
  const double h = level.h;
  if (!(h * theta < 1.0))
    throw std::invalid_argument("euler_ou_ssm: h*theta >= 1 (unstable discretization)");
  const double a = 1.0 - h * theta;
  double f = 1.0, q = 0.0;
  for (std::int64_t j = 0; j < level.steps; ++j) {
    q = a * a * q + sigma * sigma * h;
    f *= a;
  }
  LinearGaussianSSM ssm;
  ssm.F = f;
  ssm.u = mu * (1.0 - f);
  ssm.Q = q;
  ssm.H = 1.0;
  ssm.r = 0.0;
  ssm.R = tau2;
  ssm.m0 = x0;
  ssm.P0 = 0.0;
  ssm.validate();
  return ssm;
}

// GBM in log space: Z' = Z + (mu - sigma^2/2) delta + N(0, sigma^2 delta),
// y = Z' + N(0, tau2). Exact (the log of a GBM is a Brownian motion with
// drift), so the Kalman evidence equals the exact model evidence.
inline LinearGaussianSSM gbm_log_ssm(double mu, double sigma, double tau2, double delta,
                                     double x0) {
  if (!(x0 > 0.0)) throw std::invalid_argument("gbm_log_ssm: x0 must be > 0");
  LinearGaussianSSM ssm;
  ssm.F = 1.0;
  ssm.u = (mu - 0.5 * sigma * sigma) * delta;
  ssm.Q = sigma * sigma * delta;
  ssm.H = 1.0;
  ssm.r = 0.0;
  ssm.R = tau2;
  ssm.m0 = std::log(x0);
  ssm.P0 = 0.0;
  ssm.validate();
  return ssm;
}

// E[X] for X log-normal with log-moments (m, P); converts gbm_log_ssm
// posteriors into means of the test function phi(x) = x.
inline double lognormal_mean(double m, double P) { return std::exp(m + 0.5 * P); }

}  // namespace mlpf
