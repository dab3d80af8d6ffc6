#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpf/euler.hpp"
#include "mlpf/models.hpp"
#include "mlpf/rng.hpp"

namespace mlpf {

// Simulate the latent path at a high discretization level and draw one
// observation per interval. Deterministic per seed.
inline std::vector<double> generate_data(const ModelInstance& model, int n_obs,
                                         std::uint64_t seed, int sim_level = 12) {
  if (n_obs < 1) throw std::invalid_argument("generate_data: n_obs must be >= 1");
  const auto level = Level::of(sim_level, model.diffusion_model.obs_interval);
  StreamFactory streams{seed, 0, static_cast<std::uint64_t>(sim_level)};
  std::vector<double> observations;
  observations.reserve(n_obs);
  double x = model.diffusion_model.x0;
  for (int k = 0; k < n_obs; ++k) {
    auto path_stream = streams.role_stream(StreamRole::data_path, static_cast<std::uint64_t>(k));
    x = euler_transition(model.diffusion_model, level, x, path_stream);
    auto obs_stream = streams.role_stream(StreamRole::data_obs, static_cast<std::uint64_t>(k));
    observations.push_back(model.observation_model.sample(x, obs_stream));
  }
  return observations;
}

inline void write_observations_csv(std::span<const double> observations,
                                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_observations_csv: cannot open " + path.string());
  out << "k,y\n";
  char buf[40];
  for (std::size_t k = 0; k < observations.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", observations[k]);
    out << (k + 1) << "," << buf << "\n";
  }
  if (!out) throw std::runtime_error("write_observations_csv: write failed for " + path.string());
}

inline std::vector<double> read_observations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_observations_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "k,y")
    throw std::runtime_error("read_observations_csv: expected 'k,y' header in " + path.string());
  std::vector<double> observations;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("read_observations_csv: bad row in " + path.string());
    observations.push_back(std::stod(line.substr(comma + 1)));
  }
  if (observations.empty())
    throw std::runtime_error("read_observations_csv: no rows in " + path.string());
  return observations;
}

}  // namespace mlpf
