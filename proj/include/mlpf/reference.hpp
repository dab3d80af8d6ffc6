#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpf/filters.hpp"
#include "mlpf/models.hpp"

namespace mlpf {

// Ground-truth surrogate for models without a closed form: a single-level
// PF at a level above every experiment level, serialized to disk and
// content-addressed on (model, level, N, seed, data) so repeat experiments
// reuse it. level = -1 marks an exact (Kalman) truth in the same container.
struct ReferenceRun {
  std::string model;
  int level = 0;
  std::int64_t n_particles = 0;
  std::uint64_t seed = 0;
  double log_evidence = 0.0;
  std::vector<double> filter_means;
};

namespace detail {

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a_doubles(std::span<const double> values, std::uint64_t h) {
  return fnv1a({reinterpret_cast<const unsigned char*>(values.data()), values.size() * sizeof(double)}, h);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::uint64_t reference_content_hash(const std::string& model_name, int level,
                                            std::int64_t n_particles, std::uint64_t seed,
                                            std::span<const double> observations) {
  std::uint64_t h = detail::fnv1a(
      {reinterpret_cast<const unsigned char*>(model_name.data()), model_name.size()});
  const double meta[3] = {static_cast<double>(level), static_cast<double>(n_particles),
                          static_cast<double>(seed)};
  h = detail::fnv1a_doubles(meta, h);
  return detail::fnv1a_doubles(observations, h);
}

inline void write_reference(const ReferenceRun& run, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_reference: cannot open " + path.string());
  out << "mlpf-reference v1\n";
  out << "model=" << run.model << "\n";
  out << "level=" << run.level << "\n";
  out << "n_particles=" << run.n_particles << "\n";
  out << "seed=" << run.seed << "\n";
  out << "n_obs=" << run.filter_means.size() << "\n";
  out << "log_evidence=" << detail::format_double(run.log_evidence) << "\n";
  out << "k,filter_mean\n";
  for (std::size_t k = 0; k < run.filter_means.size(); ++k)
    out << (k + 1) << "," << detail::format_double(run.filter_means[k]) << "\n";
  if (!out) throw std::runtime_error("write_reference: write failed for " + path.string());
}

inline ReferenceRun read_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_reference: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "mlpf-reference v1")
    throw std::runtime_error("read_reference: bad header in " + path.string());
  ReferenceRun run;
  std::size_t n_obs = 0;
  auto expect_kv = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + "=", 0) != 0)
      throw std::runtime_error("read_reference: expected '" + key + "=' in " + path.string());
    return line.substr(key.size() + 1);
  };
  run.model = expect_kv("model");
  run.level = std::stoi(expect_kv("level"));
  run.n_particles = std::stoll(expect_kv("n_particles"));
  run.seed = std::stoull(expect_kv("seed"));
  n_obs = std::stoull(expect_kv("n_obs"));
  run.log_evidence = std::stod(expect_kv("log_evidence"));
  if (!std::getline(in, line) || line != "k,filter_mean")
    throw std::runtime_error("read_reference: expected column header in " + path.string());
  run.filter_means.reserve(n_obs);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("read_reference: bad row in " + path.string());
    run.filter_means.push_back(std::stod(line.substr(comma + 1)));
  }
  if (run.filter_means.size() != n_obs)
    throw std::runtime_error("read_reference: row count mismatch in " + path.string());
  return run;
}

// Run (or load from cache) the reference filter. level_ref must exceed the
// highest level any experiment against this truth will use.
inline ReferenceRun reference_pf(const ModelInstance& model, int level_ref,
                                 std::int64_t n_particles, std::uint64_t seed,
                                 std::span<const double> observations,
                                 int max_experiment_level,
                                 const std::filesystem::path& cache_dir) {
  if (level_ref < max_experiment_level + 1)
    throw std::invalid_argument("reference_pf: level_ref must be >= max experiment level + 1");
  const auto hash = reference_content_hash(model.name(), level_ref, n_particles, seed, observations);
  char name[64];
  std::snprintf(name, sizeof(name), "ref_%016" PRIx64 ".txt", hash);
  const auto path = cache_dir / name;
  if (std::filesystem::exists(path)) {
    auto cached = read_reference(path);
    if (cached.model == model.name() && cached.filter_means.size() == observations.size())
      return cached;
  }
  std::filesystem::create_directories(cache_dir);
  const auto level = Level::of(level_ref, model.diffusion_model.obs_interval);
  StreamFactory streams{seed, 0, static_cast<std::uint64_t>(level_ref)};
  const auto pf = run_pf(model, level, static_cast<std::size_t>(n_particles), observations,
                         ResampleRule::adaptive(), streams);
  ReferenceRun run;
  run.model = model.name();
  run.level = level_ref;
  run.n_particles = n_particles;
  run.seed = seed;
  run.log_evidence = pf.log_nc;
  run.filter_means = pf.filter_means;
  write_reference(run, path);
  return run;
}

}  // namespace mlpf
