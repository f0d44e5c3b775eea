#pragma once

#include "probgain/paramdyn.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace probgain {

struct NoiseModel {
  Mat S_d;  // disturbance uncertainty
  Mat S_u;  // input implementation uncertainty
  Mat S_n;  // per-step measurement noise over (y,u,d)

  void validate(const SignalLayout& layout) const;
  // adds 1e-10 I to a singular S_n; sets *warned when it did
  NoiseModel regularized(bool* warned = nullptr) const;
};

struct FilterState {
  Vec g_hat;
  Mat P_post;
  int k = 0;
};

Vec predict(const ParamDynamics& dyn, const FilterState& state, const Vec& d_mean,
            const Vec& z_hat);

Vec control_from_prior(const BehaviorBasis& basis, const Vec& g_prior);

Mat process_covariance(const ParamDynamics& dyn, const NoiseModel& noise);
Mat covariance_predict(const ParamDynamics& dyn, const Mat& P_post, const NoiseModel& noise);

struct GainUpdate {
  Mat K;
  Mat P_post;
};

// H is the measurement map Pi_f F
GainUpdate gain_and_update(const Mat& H, const Mat& P_prior, const Mat& S_n);
GainUpdate gain_and_update(const BehaviorBasis& basis, const Mat& P_prior, const NoiseModel& noise);

// (I - K H) P (I - K H)' + K S_n K', valid for any gain
Mat joseph_posterior(const Mat& H, const Mat& P_prior, const Mat& S_n, const Mat& K);

Vec posterior_update(const BehaviorBasis& basis, const Vec& g_prior, const Mat& K,
                     const Vec& w_measured);

struct SteadyState {
  Mat P;
  Mat Q_term;
  Mat N_term;
  Mat A_term;
  Mat R_term;
  Mat T_term;
  Mat K_inf;
  int iterations = 0;
  double residual = 0;  // relative Frobenius residual of the fixed-point equation
};

struct AreOptions {
  int max_iter = 10000;
  double tol = 1e-10;
  std::optional<Mat> P0;  // defaults to Q_term
};

SteadyState solve_are(const Mat& E_p, const Mat& E_f, const Mat& E_u, const Mat& H,
                      const NoiseModel& noise, const AreOptions& opts = {});
SteadyState solve_are(const ParamDynamics& dyn, const BehaviorBasis& basis,
                      const NoiseModel& noise, const AreOptions& opts = {});

double are_residual(const Mat& P, const Mat& E_p, const Mat& Q, const Mat& N);

void write_steady_state_report(std::ostream& os, const SteadyState& ss,
                               const std::vector<std::string>& header_lines = {});

}  // namespace probgain
