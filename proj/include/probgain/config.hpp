#pragma once

#include "probgain/simulator.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace probgain {

enum class GammaMode { Fixed, Corollary1, Optimize };
const char* to_string(GammaMode mode);

struct GammaSpec {
  GammaMode mode = GammaMode::Fixed;
  double gamma1_sq = 1.21;
  double gamma2_sq = 1.21;
  double gamma = 1.0;  // corollary1
  double p = 0.81;     // corollary1
};

struct SimulationConfig {
  int horizon = 100;
  int cohort = 2000;
  int campaigns = 1;
  std::vector<int> cdf_horizons{5, 20};
  int display = 50;
  double overflow_cap = 1e9;
  double initial_output_scale = 4.0;
  double divergence_threshold = 0.05;
  int threads = 0;
};

struct MixtureConfig {
  std::string kind = "mixture";  // mixture | gaussian
  int components = 3;
  double spread = 0.5;
};

struct Tolerances {
  double null_tol = 0.1;
  double strict_margin = 1e-6;
  double feas_tol = 1e-8;
  double cert_tol = 1e-8;
  double are_tol = 1e-10;
  double gap_tol = 10.0;
};

struct RunConfig {
  SignalLayout layout;
  bool auto_n_state = false;
  std::optional<KernelModel> kernel;
  NoiseModel noise;
  MixtureConfig mixtures;
  DatasetOptions dataset;
  GammaSpec gamma;
  DesignMode mode = DesignMode::General;
  Vec d_bar;
  SimulationConfig sim;
  std::uint64_t dataset_seed = 7;
  std::uint64_t simulation_seed = 1000;
  Tolerances tol;

  // throws Schema for inconsistent settings
  void validate() const;
};

// benchmark plant, general mode
RunConfig default_config();

// Missing keys keep their defaults; unknown keys and wrong types are schema
// errors naming the offending key.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

// canonical JSON of the effective configuration
std::string canonical_json(const RunConfig& cfg);
// FNV-1a 64 of the canonical JSON, as 16 hex digits
std::string config_hash(const RunConfig& cfg);

std::vector<std::string> provenance_header(const RunConfig& cfg);

}  // namespace probgain
