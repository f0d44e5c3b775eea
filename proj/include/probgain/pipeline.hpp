#pragma once

#include "probgain/config.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace probgain {

enum ExitCode { kExitOk = 0, kExitFailure = 1, kExitInfeasible = 2, kExitDivergence = 3, kExitSchema = 4 };

// Schema and usage errors map to kExitSchema, anything else to kExitFailure.
int exit_code_for(const Error& e);

struct OfflineProducts {
  BehaviorBasis basis;
  ParamDynamics dyn;
  SteadyState ss;
};

OfflineProducts offline_from_dataset(const RunConfig& cfg, const TrajectorySet& data);
OfflineProducts offline_from_basis(const RunConfig& cfg, BehaviorBasis basis);

// weighting for the configured mode and horizon
double design_rho(const RunConfig& cfg);

struct DesignOutcome {
  LmiProgram lmi;
  DesignResult result;
  double rho = 0;
};

DesignOutcome design_controller(const RunConfig& cfg, const OfflineProducts& offline);

NoiseSources campaign_sources(const RunConfig& cfg, int campaign);

struct CommandOptions {
  std::string out = ".";
  std::optional<std::string> dataset;
  std::optional<std::string> design;
  std::optional<std::string> basis;
  std::vector<std::string> inputs;
};

int cmd_generate(const RunConfig& cfg, const CommandOptions& o, std::ostream& log);
int cmd_design(const RunConfig& cfg, const CommandOptions& o, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, const CommandOptions& o, std::ostream& log);
int cmd_report(const CommandOptions& o, std::ostream& log);
int cmd_are(const RunConfig& cfg, const CommandOptions& o, std::ostream& out);
int cmd_check(const RunConfig& cfg, const CommandOptions& o, std::ostream& out);

}  // namespace probgain
