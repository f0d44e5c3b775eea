#pragma once

// Shared benchmark data for the test suites. Everything is built once per
// process and cached.

#include "probgain/pipeline.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace probgain::testing {

const BenchmarkFixture& fixture();

struct Offline {
  BehaviorBasis basis;
  ParamDynamics dyn;
  SteadyState ss;
};

// decomposition and filter of the kernel's exact behavior
const Offline& exact_offline();
// the same from a learned basis (dataset seed 7, 500 trajectories)
const Offline& learned_offline();

Offline offline_for(const BehaviorBasis& basis, const NoiseModel& noise);

inline SynthesisData data_of(const Offline& o) {
  return {o.dyn, o.basis, o.ss, fixture().noise};
}

Mat random_matrix(int rows, int cols, std::mt19937_64& rng);
Mat random_spd(int n, std::mt19937_64& rng, double floor = 0.1);

// fresh empty directory under the system temp dir
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace probgain::testing
