#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mlpf/level.hpp"
#include "mlpf/models.hpp"
#include "mlpf/rng.hpp"

namespace mlpf {

struct numerical_blowup : std::runtime_error {
  numerical_blowup(const std::string& what, std::int64_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_index(step) {}
  std::int64_t step_index;
};

// Deterministic increment source for tests: hands out a fixed sequence.
class FixedIncrements {
 public:
  explicit FixedIncrements(std::vector<double> draws) : draws_(std::move(draws)) {}
  double next_normal() {
    if (pos_ >= draws_.size()) throw std::out_of_range("FixedIncrements exhausted");
    return draws_[pos_++];
  }
  std::size_t consumed() const { return pos_; }

 private:
  std::vector<double> draws_;
  std::size_t pos_ = 0;
};

namespace detail {

// Coefficient functors for the compiled model kinds; chosen once per
// transition so the step loops inline the arithmetic.
struct MeanRevertConst {
  double theta, mu, sigma;
  double drift(double x) const { return theta * (mu - x); }
  double diffusion(double) const { return sigma; }
};
struct GbmCoeffs {
  double mu, sigma;
  double drift(double x) const { return mu * x; }
  double diffusion(double x) const { return sigma * x; }
};
struct LangevinCoeffs {
  double nu, sigma;
  double drift(double x) const { return -(nu + 1.0) * x / (2.0 * (nu + x * x)); }
  double diffusion(double) const { return sigma; }
};
struct MeanRevertSqrt {
  double theta, mu, sigma;
  double drift(double x) const { return theta * (mu - x); }
  double diffusion(double x) const { return sigma / std::sqrt(1.0 + x * x); }
};
struct GenericCoeffs {
  const DiffusionModel* m;
  double drift(double x) const { return m->drift(x); }
  double diffusion(double x) const { return m->diffusion(x); }
};

template <class Coeffs, class Stream>
double euler_loop(const Coeffs& sde, const Level& level, double x, Stream& increments) {
  const double h = level.h;
  const double sqrt_h = std::sqrt(h);
  for (std::int64_t m = 0; m < level.steps; ++m) {
    x += h * sde.drift(x) + sqrt_h * sde.diffusion(x) * increments.next_normal();
    if (!std::isfinite(x)) throw numerical_blowup("euler_transition: non-finite state", m);
  }
  return x;
}

template <class Coeffs, class Stream>
std::pair<double, double> coupled_euler_loop(const Coeffs& sde, const Level& level,
                                             double x_fine, double x_coarse,
                                             Stream& increments) {
  const double h_fine = level.h;
  const double h_coarse = 2.0 * h_fine;
  const double sqrt_h_fine = std::sqrt(h_fine);
  const std::int64_t coarse_steps = level.steps / 2;
  for (std::int64_t m = 0; m < coarse_steps; ++m) {
    const double xi0 = increments.next_normal();
    x_fine += h_fine * sde.drift(x_fine) + sqrt_h_fine * sde.diffusion(x_fine) * xi0;
    const double xi1 = increments.next_normal();
    x_fine += h_fine * sde.drift(x_fine) + sqrt_h_fine * sde.diffusion(x_fine) * xi1;
    x_coarse += h_coarse * sde.drift(x_coarse) +
                sqrt_h_fine * sde.diffusion(x_coarse) * (xi0 + xi1);
    if (!std::isfinite(x_fine))
      throw numerical_blowup("coupled_euler_transition: non-finite fine state", 2 * m);
    if (!std::isfinite(x_coarse))
      throw numerical_blowup("coupled_euler_transition: non-finite coarse state", m);
  }
  return {x_fine, x_coarse};
}

}  // namespace detail

// One observation interval of Euler-Maruyama at the given level:
// X <- X + h a(X) + sqrt(h) b(X) xi, iterated level.steps times.
// Consumes exactly level.steps normal draws from the stream.
template <class Stream>
double euler_transition(const DiffusionModel& model, const Level& level, double x,
                        Stream& increments) {
  using Kind = DiffusionModel::Kind;
  switch (model.kind) {
    case Kind::mean_revert_const:
      return detail::euler_loop(detail::MeanRevertConst{model.k0, model.k1, model.k2}, level, x,
                                increments);
    case Kind::gbm:
      return detail::euler_loop(detail::GbmCoeffs{model.k0, model.k2}, level, x, increments);
    case Kind::langevin:
      return detail::euler_loop(detail::LangevinCoeffs{model.k0, model.k2}, level, x,
                                increments);
    case Kind::mean_revert_sqrt:
      return detail::euler_loop(detail::MeanRevertSqrt{model.k0, model.k1, model.k2}, level, x,
                                increments);
    case Kind::generic:
      break;
  }
  return detail::euler_loop(detail::GenericCoeffs{&model}, level, x, increments);
}

// Synchronized fine/coarse pair over one observation interval. The fine
// chain runs level.steps steps of width h_l; the coarse chain runs half as
// many steps of width h_{l-1} = 2 h_l, driven by the summed fine increments
// scaled by sqrt(h_l) so its per-step noise variance is exactly h_{l-1}.
// Both chains consume the same draw sequence.
template <class Stream>
std::pair<double, double> coupled_euler_transition(const DiffusionModel& model,
                                                   const Level& level, double x_fine,
                                                   double x_coarse, Stream& increments) {
  if (level.l < 1)
    throw std::invalid_argument("coupled_euler_transition: level must be >= 1");
  using Kind = DiffusionModel::Kind;
  switch (model.kind) {
    case Kind::mean_revert_const:
      return detail::coupled_euler_loop(detail::MeanRevertConst{model.k0, model.k1, model.k2},
                                        level, x_fine, x_coarse, increments);
    case Kind::gbm:
      return detail::coupled_euler_loop(detail::GbmCoeffs{model.k0, model.k2}, level, x_fine,
                                        x_coarse, increments);
    case Kind::langevin:
      return detail::coupled_euler_loop(detail::LangevinCoeffs{model.k0, model.k2}, level,
                                        x_fine, x_coarse, increments);
    case Kind::mean_revert_sqrt:
      return detail::coupled_euler_loop(detail::MeanRevertSqrt{model.k0, model.k1, model.k2},
                                        level, x_fine, x_coarse, increments);
    case Kind::generic:
      break;
  }
  return detail::coupled_euler_loop(detail::GenericCoeffs{&model}, level, x_fine, x_coarse,
                                    increments);
}

}  // namespace mlpf
