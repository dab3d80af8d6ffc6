#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "mlpf/rng.hpp"

namespace mlpf {

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)

// Log-density floor used where a state drives a density to zero (e.g. GBM
// pushed to x <= 0 by Euler): 1e-300 in density space. Particles carrying
// it die at the next resampling instead of poisoning the weights with -inf.
inline constexpr double kLogDensityFloor = -690.0;

inline double gaussian_log_density(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

inline double laplace_log_density(double y, double loc, double scale) {
  return -std::abs(y - loc) / scale - std::log(2.0 * scale);
}

// dX_t = a(X_t) dt + b(X_t) dW_t, observed every obs_interval time units.
// The catalog models also carry a compiled kind so the Euler hot loops can
// inline their coefficients; kind == generic falls back to the std::function
// fields.
struct DiffusionModel {
  std::string name;
  std::function<double(double)> drift;      // a
  std::function<double(double)> diffusion;  // b, scalar (d = 1)
  double x0 = 0.0;
  double obs_interval = 1.0;  // delta
  int dim = 1;

  enum class Kind { generic, mean_revert_const, gbm, langevin, mean_revert_sqrt };
  Kind kind = Kind::generic;
  double k0 = 0.0, k1 = 0.0, k2 = 0.0;  // kind-specific coefficients
};

struct ObservationModel {
  // log G(x, y)
  std::function<double(double, double)> log_likelihood;
  std::function<double(double, RngStream&)> sample;
};

struct TestFunction {
  std::function<double(double)> phi;
};

enum class NlmObsFamily { laplace, lognormal };

struct ModelInstance {
  DiffusionModel diffusion_model;
  ObservationModel observation_model;
  TestFunction test_function;
  std::map<std::string, double> constants;
  // beta = 2 when b(x) is constant, 1 otherwise (strong error rate rule)
  bool constant_diffusion = false;

  const std::string& name() const { return diffusion_model.name; }
  double constant(const std::string& key) const {
    auto it = constants.find(key);
    if (it == constants.end())
      throw std::out_of_range("model '" + diffusion_model.name + "' has no constant '" + key + "'");
    return it->second;
  }
};

using ConstantOverrides = std::map<std::string, double>;

namespace detail {

inline std::map<std::string, double> apply_overrides(std::map<std::string, double> base,
                                                     const ConstantOverrides& overrides) {
  for (const auto& [k, v] : overrides) {
    if (base.find(k) == base.end())
      throw std::invalid_argument("unknown model constant override '" + k + "'");
    base[k] = v;
  }
  return base;
}

inline void require_positive(const std::map<std::string, double>& constants,
                             std::initializer_list<const char*> keys, const char* model) {
  for (const char* key : keys) {
    if (!(constants.at(key) > 0.0))
      throw std::invalid_argument(std::string(model) + ": constant '" + key +
                                  "' must be > 0");
  }
}

}  // namespace detail

// Ornstein-Uhlenbeck: a = theta*(mu - x), b = sigma, y ~ N(x, tau2), phi = x.
inline ModelInstance ou_model(const ConstantOverrides& overrides = {}) {
  auto c = detail::apply_overrides(
      {{"theta", 1.0}, {"mu", 0.0}, {"sigma", 0.5}, {"tau2", 0.2}, {"x0", 0.0}, {"delta", 0.5}},
      overrides);
  detail::require_positive(c, {"sigma", "tau2", "delta"}, "ou");
  const double theta = c.at("theta"), mu = c.at("mu"), sigma = c.at("sigma"), tau2 = c.at("tau2");
  ModelInstance m;
  m.diffusion_model = {"ou",
                       [theta, mu](double x) { return theta * (mu - x); },
                       [sigma](double) { return sigma; },
                       c.at("x0"), c.at("delta"), 1,
                       DiffusionModel::Kind::mean_revert_const, theta, mu, sigma};
  m.observation_model = {
      [tau2](double x, double y) { return gaussian_log_density(y, x, tau2); },
      [tau2](double x, RngStream& rng) { return x + std::sqrt(tau2) * rng.next_normal(); }};
  m.test_function = {[](double x) { return x; }};
  m.constants = c;
  m.constant_diffusion = true;
  return m;
}

// Geometric Brownian motion: a = mu*x, b = sigma*x, y ~ N(log x, tau2),
// phi = x. Euler can push x to <= 0; the observation density is floored
// there and sampling throws.
inline ModelInstance gbm_model(const ConstantOverrides& overrides = {}) {
  auto c = detail::apply_overrides(
      {{"mu", 0.02}, {"sigma", 0.2}, {"tau2", 0.01}, {"x0", 1.0}, {"delta", 0.001}}, overrides);
  detail::require_positive(c, {"sigma", "tau2", "x0", "delta"}, "gbm");
  const double mu = c.at("mu"), sigma = c.at("sigma"), tau2 = c.at("tau2");
  ModelInstance m;
  m.diffusion_model = {"gbm",
                       [mu](double x) { return mu * x; },
                       [sigma](double x) { return sigma * x; },
                       c.at("x0"), c.at("delta"), 1,
                       DiffusionModel::Kind::gbm, mu, 0.0, sigma};
  m.observation_model = {
      [tau2](double x, double y) {
        if (!(x > 0.0)) return kLogDensityFloor;
        return gaussian_log_density(y, std::log(x), tau2);
      },
      [tau2](double x, RngStream& rng) {
        if (!(x > 0.0)) throw std::domain_error("gbm: cannot observe non-positive state");
        return std::log(x) + std::sqrt(tau2) * rng.next_normal();
      }};
  m.test_function = {[](double x) { return x; }};
  m.constants = c;
  m.constant_diffusion = false;
  return m;
}

// Langevin SDE: a = (1/2) d/dx log pi(x) with pi a Student-t(nu) density,
// b = sigma, y ~ N(0, tau2 * e^x), phi = tau2 * e^x.
inline ModelInstance langevin_model(const ConstantOverrides& overrides = {}) {
  auto c = detail::apply_overrides(
      {{"nu", 10.0}, {"sigma", 1.0}, {"tau2", 1.0}, {"x0", 0.0}, {"delta", 1.0}}, overrides);
  detail::require_positive(c, {"nu", "sigma", "tau2", "delta"}, "langevin");
  const double nu = c.at("nu"), sigma = c.at("sigma"), tau2 = c.at("tau2");
  ModelInstance m;
  m.diffusion_model = {"langevin",
                       [nu](double x) { return -(nu + 1.0) * x / (2.0 * (nu + x * x)); },
                       [sigma](double) { return sigma; },
                       c.at("x0"), c.at("delta"), 1,
                       DiffusionModel::Kind::langevin, nu, 0.0, sigma};
  m.observation_model = {
      [tau2](double x, double y) { return gaussian_log_density(y, 0.0, tau2 * std::exp(x)); },
      [tau2](double x, RngStream& rng) {
        return std::sqrt(tau2 * std::exp(x)) * rng.next_normal();
      }};
  m.test_function = {[tau2](double x) { return tau2 * std::exp(x); }};
  m.constants = c;
  m.constant_diffusion = true;
  return m;
}

// Non-linear diffusion model: a = theta*(mu - x), b = sigma / sqrt(1 + x^2),
// y ~ Laplace(x, s), phi = x. A log-normal observation family is available
// for comparison (location x, scale s on y > 0).
inline ModelInstance nlm_model(const ConstantOverrides& overrides = {},
                               NlmObsFamily family = NlmObsFamily::laplace) {
  auto c = detail::apply_overrides({{"theta", 1.0},
                                    {"mu", 0.0},
                                    {"sigma", 1.0},
                                    {"s", std::sqrt(0.1)},
                                    {"x0", 0.0},
                                    {"delta", 0.5}},
                                   overrides);
  detail::require_positive(c, {"sigma", "s", "delta"}, "nlm");
  const double theta = c.at("theta"), mu = c.at("mu"), sigma = c.at("sigma"), s = c.at("s");
  ModelInstance m;
  m.diffusion_model = {"nlm",
                       [theta, mu](double x) { return theta * (mu - x); },
                       [sigma](double x) { return sigma / std::sqrt(1.0 + x * x); },
                       c.at("x0"), c.at("delta"), 1,
                       DiffusionModel::Kind::mean_revert_sqrt, theta, mu, sigma};
  if (family == NlmObsFamily::laplace) {
    m.observation_model = {
        [s](double x, double y) { return laplace_log_density(y, x, s); },
        [s](double x, RngStream& rng) {
          // inverse-CDF draw
          const double u = rng.next_uniform() - 0.5;
          return x - s * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
        }};
  } else {
    m.observation_model = {
        [s](double x, double y) {
          if (!(y > 0.0)) return kLogDensityFloor;
          const double ly = std::log(y);
          return gaussian_log_density(ly, x, s * s) - ly;
        },
        [s](double x, RngStream& rng) { return std::exp(x + s * rng.next_normal()); }};
  }
  m.test_function = {[](double x) { return x; }};
  m.constants = c;
  m.constant_diffusion = false;
  return m;
}

inline ModelInstance make_model(const std::string& name, const ConstantOverrides& overrides = {},
                                NlmObsFamily nlm_family = NlmObsFamily::laplace) {
  if (name == "ou") return ou_model(overrides);
  if (name == "gbm") return gbm_model(overrides);
  if (name == "langevin") return langevin_model(overrides);
  if (name == "nlm") return nlm_model(overrides, nlm_family);
  throw std::invalid_argument("unknown model '" + name + "' (expected ou|gbm|langevin|nlm)");
}

}  // namespace mlpf
