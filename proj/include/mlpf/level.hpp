#pragma once

#include <cstdint>
#include <stdexcept>

namespace mlpf {

// Discretization level: the observation interval delta is cut into
// steps = 2^l Euler steps of width h = delta * 2^-l, so h * steps == delta
// exactly (both factors are powers of two).
struct Level {
  int l = 0;
  double h = 0.0;
  std::int64_t steps = 0;

  static Level of(int l, double obs_interval) {
    if (l < 0) throw std::invalid_argument("Level: l must be >= 0");
    if (l > 62) throw std::invalid_argument("Level: l too large");
    if (!(obs_interval > 0.0)) throw std::invalid_argument("Level: obs_interval must be > 0");
    Level lvl;
    lvl.l = l;
    lvl.steps = std::int64_t{1} << l;
    lvl.h = obs_interval / static_cast<double>(lvl.steps);
    return lvl;
  }

  Level coarser() const {
    if (l < 1) throw std::logic_error("Level: no coarser level below 0");
    Level lvl;
    lvl.l = l - 1;
    lvl.steps = steps / 2;
    lvl.h = 2.0 * h;
    return lvl;
  }
};

// Dimensionless step width 2^-l used by the allocation formulas (the
// per-interval grid fraction; independent of delta).
inline double level_width(int l) { return std::ldexp(1.0, -l); }

}  // namespace mlpf
