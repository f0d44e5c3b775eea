#pragma once

#include "probgain/behavior.hpp"

#include <vector>

namespace probgain {

// g_k = F_p g_{k-1} + F_f d_k + F_z z_k, and the prior-error maps
// e_{k|k-1} = E_p e_{k-1|k-1} + E_f dd_k + E_u du_k.
struct ParamDynamics {
  Mat F_p;
  Mat F_f;
  Mat F_z;
  Mat E_p;
  Mat E_f;
  Mat E_u;
  double uz_condition = 0;  // condition number of Pi_u F F_z
};

struct DecomposeOptions {
  // singular values of [F_wp; F_dk] below null_tol * sigma_max count as null
  // directions; a learned basis only annihilates F_z approximately
  double null_tol = 0.1;
  double cond_max = 1e8;
};

ParamDynamics decompose(const BehaviorBasis& basis, const DecomposeOptions& opts = {});

std::vector<Vec> simulate_parameterizer(const ParamDynamics& dyn, const Vec& g0,
                                        const std::vector<Vec>& d_seq,
                                        const std::vector<Vec>& z_seq);

}  // namespace probgain
