#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpf/models.hpp"

namespace mlpf {

// Declarative experiment description. Serializes to a flat key=value file;
// CLI flags override file values. parse(serialize(c)) == c.
struct ExperimentConfig {
  std::string model = "ou";
  std::map<std::string, double> model_overrides;  // keys like "ou.theta"
  std::string nlm_obs = "laplace";                // or "lognormal"
  int n_obs = 100;
  int L = 3;
  std::optional<double> epsilon;  // set -> section4 allocation from epsilon
  std::string allocation = "section5";
  double allocation_c = 1.0;
  std::vector<std::string> estimators = {"ml-unbiased", "ml-biased"};
  std::string resample = "adaptive";  // or "always"
  double resample_threshold = 0.25;
  int replicates = 20;
  std::uint64_t seed = 1;
  std::string data = "generate";  // or a CSV path
  int sim_level = 12;
  std::string out = "out";
  std::optional<double> c_scale;
  int threads = 0;  // 0 = hardware concurrency
  double pf_scale = 1.0;
  std::int64_t variance_n = 0;  // 0 = section-5 allocation sizes per level
  int reference_level = 9;
  std::int64_t reference_particles = 100000;
  std::uint64_t reference_seed = 777;
  bool timings = false;

  void validate() const;
  std::string serialize() const;
  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse(std::istream& in, const std::string& origin = "<config>");
  void set_key(const std::string& key, const std::string& value);

  // overrides for the active model, with the "<model>." prefix stripped
  ConstantOverrides active_overrides() const {
    ConstantOverrides out_map;
    const std::string prefix = model + ".";
    for (const auto& [k, v] : model_overrides)
      if (k.rfind(prefix, 0) == 0) out_map[k.substr(prefix.size())] = v;
    return out_map;
  }

  NlmObsFamily nlm_family() const {
    return nlm_obs == "lognormal" ? NlmObsFamily::lognormal : NlmObsFamily::laplace;
  }

  // canonical estimator list with "all" expanded, order fixed
  std::vector<std::string> estimator_set() const {
    std::set<std::string> wanted;
    for (const auto& e : estimators) {
      if (e == "all") {
        wanted.insert({"single", "ml-unbiased", "ml-biased"});
      } else {
        wanted.insert(e);
      }
    }
    std::vector<std::string> out_list;
    for (const char* name : {"single", "ml-unbiased", "ml-biased"})
      if (wanted.count(name)) out_list.push_back(name);
    return out_list;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool is_model_constant_key(const std::string& key) {
  for (const char* m : {"ou.", "gbm.", "langevin.", "nlm."})
    if (key.rfind(m, 0) == 0 && key != "nlm.obs") return true;
  return false;
}

}  // namespace detail

inline void ExperimentConfig::set_key(const std::string& key, const std::string& value) {
  auto as_double = [&] {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("config: bad number for " + key);
    return v;
  };
  auto as_int = [&] { return static_cast<int>(as_double()); };
  if (key == "model") model = value;
  else if (key == "nlm.obs") nlm_obs = value;
  else if (key == "n_obs") n_obs = as_int();
  else if (key == "L") L = as_int();
  else if (key == "epsilon") epsilon = as_double();
  else if (key == "allocation") allocation = value;
  else if (key == "allocation_c") allocation_c = as_double();
  else if (key == "estimators") {
    estimators.clear();
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) estimators.push_back(item);
    }
  } else if (key == "resample") resample = value;
  else if (key == "resample_threshold") resample_threshold = as_double();
  else if (key == "replicates") replicates = as_int();
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "data") data = value;
  else if (key == "sim_level") sim_level = as_int();
  else if (key == "out") out = value;
  else if (key == "c_scale") c_scale = as_double();
  else if (key == "threads") threads = as_int();
  else if (key == "pf_scale") pf_scale = as_double();
  else if (key == "variance_n") variance_n = static_cast<std::int64_t>(as_double());
  else if (key == "reference_level") reference_level = as_int();
  else if (key == "reference_particles") reference_particles = static_cast<std::int64_t>(as_double());
  else if (key == "reference_seed") reference_seed = std::stoull(value);
  else if (key == "timings") timings = (value == "true" || value == "1");
  else if (detail::is_model_constant_key(key)) model_overrides[key] = as_double();
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& origin) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected key=value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    try {
      cfg.set_key(key, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  auto cfg = parse(in, path);
  cfg.validate();
  return cfg;
}

inline std::string ExperimentConfig::serialize() const {
  std::ostringstream out_ss;
  char buf[40];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out_ss << "model=" << model << "\n";
  out_ss << "nlm.obs=" << nlm_obs << "\n";
  out_ss << "n_obs=" << n_obs << "\n";
  out_ss << "L=" << L << "\n";
  if (epsilon) out_ss << "epsilon=" << fmt(*epsilon) << "\n";
  out_ss << "allocation=" << allocation << "\n";
  out_ss << "allocation_c=" << fmt(allocation_c) << "\n";
  out_ss << "estimators=";
  for (std::size_t i = 0; i < estimators.size(); ++i)
    out_ss << (i ? "," : "") << estimators[i];
  out_ss << "\n";
  out_ss << "resample=" << resample << "\n";
  out_ss << "resample_threshold=" << fmt(resample_threshold) << "\n";
  out_ss << "replicates=" << replicates << "\n";
  out_ss << "seed=" << seed << "\n";
  out_ss << "data=" << data << "\n";
  out_ss << "sim_level=" << sim_level << "\n";
  out_ss << "out=" << out << "\n";
  if (c_scale) out_ss << "c_scale=" << fmt(*c_scale) << "\n";
  out_ss << "threads=" << threads << "\n";
  out_ss << "pf_scale=" << fmt(pf_scale) << "\n";
  out_ss << "variance_n=" << variance_n << "\n";
  out_ss << "reference_level=" << reference_level << "\n";
  out_ss << "reference_particles=" << reference_particles << "\n";
  out_ss << "reference_seed=" << reference_seed << "\n";
  out_ss << "timings=" << (timings ? "true" : "false") << "\n";
  for (const auto& [k, v] : model_overrides) out_ss << k << "=" << fmt(v) << "\n";
  return out_ss.str();
}

inline void ExperimentConfig::validate() const {
  if (model != "ou" && model != "gbm" && model != "langevin" && model != "nlm")
    throw std::invalid_argument("config: model must be ou|gbm|langevin|nlm");
  if (nlm_obs != "laplace" && nlm_obs != "lognormal")
    throw std::invalid_argument("config: nlm.obs must be laplace|lognormal");
  if (n_obs < 1) throw std::invalid_argument("config: n_obs must be >= 1");
  if (L < 0) throw std::invalid_argument("config: L must be >= 0");
  if (epsilon && !(*epsilon > 0.0 && *epsilon < 1.0))
    throw std::invalid_argument("config: epsilon must be in (0, 1)");
  if (allocation != "section4" && allocation != "section5")
    throw std::invalid_argument("config: allocation must be section4|section5");
  if (!(allocation_c > 0.0)) throw std::invalid_argument("config: allocation_c must be > 0");
  if (estimators.empty()) throw std::invalid_argument("config: estimators must be non-empty");
  for (const auto& e : estimators)
    if (e != "single" && e != "ml-unbiased" && e != "ml-biased" && e != "all" && e != "increment")
      throw std::invalid_argument("config: unknown estimator '" + e + "'");
  if (resample != "always" && resample != "adaptive")
    throw std::invalid_argument("config: resample must be always|adaptive");
  if (!(resample_threshold > 0.0 && resample_threshold <= 1.0))
    throw std::invalid_argument("config: resample_threshold must be in (0, 1]");
  if (replicates < 1) throw std::invalid_argument("config: replicates must be >= 1");
  if (sim_level < 0 || sim_level > 20)
    throw std::invalid_argument("config: sim_level must be in [0, 20]");
  if (threads < 0) throw std::invalid_argument("config: threads must be >= 0");
  if (!(pf_scale > 0.0)) throw std::invalid_argument("config: pf_scale must be > 0");
  if (variance_n < 0) throw std::invalid_argument("config: variance_n must be >= 0");
  if (reference_particles < 1)
    throw std::invalid_argument("config: reference_particles must be >= 1");
}

}  // namespace mlpf
