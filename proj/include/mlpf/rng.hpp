#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace mlpf {

// Keyed random number streams. Every stream is derived from an explicit
// key tuple (seed, replicate, level, role, particle, time, ...) so that a
// draw never depends on scheduling order: two runs with the same keys
// produce the same numbers at any thread count.

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += kGolden);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Stream roles keep draws for different purposes out of each other's way.
enum class StreamRole : std::uint64_t {
  propagate = 1,    // Euler increments, keyed per (particle, time)
  resample = 2,     // sequential resampling phase, keyed per time
  data_path = 3,    // latent path simulation
  data_obs = 4,     // observation noise
  init = 5,
  scratch = 6,
};

inline std::uint64_t derive_stream_key(std::initializer_list<std::uint64_t> fields) {
  std::uint64_t h = 0x243f6a8885a308d3ull;  // pi
  for (std::uint64_t f : fields) {
    h ^= f + detail::kGolden + (h << 6) + (h >> 2);
    detail::splitmix64(h);
  }
  return h;
}

// splitmix64 stream: tiny state, solid statistics, trivially seedable from
// a derived key. Normal draws use the Marsaglia polar method with the
// spare value cached, so one stream yields a reproducible i.i.d. N(0,1)
// sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // uniform on [0, 1)
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]
  double next_uniform_pos() { return 1.0 - next_uniform(); }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_uniform() - 1.0;
      v = 2.0 * next_uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Everything a single filter run needs to mint streams. `replicate` and
// `level` are fixed per run; particle/time vary inside.
struct StreamFactory {
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::uint64_t level = 0;

  RngStream propagate(std::uint64_t particle, std::uint64_t time) const {
    return RngStream(derive_stream_key(
        {seed, replicate, level, static_cast<std::uint64_t>(StreamRole::propagate), particle, time}));
  }
  RngStream resample(std::uint64_t time) const {
    return RngStream(derive_stream_key(
        {seed, replicate, level, static_cast<std::uint64_t>(StreamRole::resample), time}));
  }
  RngStream role_stream(StreamRole role, std::uint64_t a = 0, std::uint64_t b = 0) const {
    return RngStream(derive_stream_key(
        {seed, replicate, level, static_cast<std::uint64_t>(role), a, b}));
  }
};

}  // namespace mlpf
