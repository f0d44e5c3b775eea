#include "probgain/estimator.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace probgain {

void NoiseModel::validate(const SignalLayout& l) const {
  auto check = [](const Mat& S, int n, const char* name) {
    if (S.rows() != n || S.cols() != n)
      throw Error(ErrorKind::InvalidInput, std::string("noise model: ") + name + " has wrong shape");
    require_finite(S, name);
    const double lo = min_eig(S);
    if (lo < -kClampTol)
      throw Error(ErrorKind::NotPsd, std::string("noise model: ") + name + " is not PSD", lo);
  };
  check(S_d, l.q, "S_d");
  check(S_u, l.m, "S_u");
  check(S_n, l.w_dim(), "S_n");
}

NoiseModel NoiseModel::regularized(bool* warned) const {
  NoiseModel out = *this;
  const bool singular = S_n.size() == 0 || min_eig(S_n) <= 0.0;
  if (singular) out.S_n += 1e-10 * Mat::Identity(S_n.rows(), S_n.cols());
  if (warned) *warned = singular;
  return out;
}

Vec predict(const ParamDynamics& dyn, const FilterState& state, const Vec& d_mean,
            const Vec& z_hat) {
  return dyn.F_p * state.g_hat + dyn.F_f * d_mean + dyn.F_z * z_hat;
}

Vec control_from_prior(const BehaviorBasis& basis, const Vec& g_prior) {
  return basis.PiF_u() * g_prior;
}

Mat process_covariance(const ParamDynamics& dyn, const NoiseModel& noise) {
  return symmetrize(dyn.E_f * noise.S_d * dyn.E_f.transpose() +
                    dyn.E_u * noise.S_u * dyn.E_u.transpose());
}

Mat covariance_predict(const ParamDynamics& dyn, const Mat& P_post, const NoiseModel& noise) {
  return symmetrize(dyn.E_p * P_post * dyn.E_p.transpose() + process_covariance(dyn, noise));
}

GainUpdate gain_and_update(const Mat& H, const Mat& P_prior, const Mat& S_n) {
  const Mat PHt = P_prior * H.transpose();
  const Mat S = symmetrize(H * PHt + S_n);
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::SingularInnovation,
                "innovation covariance is singular; regularize S_n to be positive definite");
  GainUpdate out;
  out.K = llt.solve(PHt.transpose()).transpose();
  const int g = static_cast<int>(P_prior.rows());
  out.P_post = symmetrize((Mat::Identity(g, g) - out.K * H) * P_prior);
  return out;
}

GainUpdate gain_and_update(const BehaviorBasis& basis, const Mat& P_prior, const NoiseModel& noise) {
  return gain_and_update(basis.PiF_f(), P_prior, noise.S_n);
}

Mat joseph_posterior(const Mat& H, const Mat& P_prior, const Mat& S_n, const Mat& K) {
  const int g = static_cast<int>(P_prior.rows());
  const Mat A = Mat::Identity(g, g) - K * H;
  return symmetrize(A * P_prior * A.transpose() + K * S_n * K.transpose());
}

Vec posterior_update(const BehaviorBasis& basis, const Vec& g_prior, const Mat& K,
                     const Vec& w_measured) {
  return g_prior + K * (w_measured - basis.PiF_f() * g_prior);
}

double are_residual(const Mat& P, const Mat& E_p, const Mat& Q, const Mat& N) {
  const double denom = std::max(P.norm(), 1e-300);
  return (P - (E_p * P * E_p.transpose() - N + Q)).norm() / denom;
}

SteadyState solve_are(const Mat& E_p, const Mat& E_f, const Mat& E_u, const Mat& H,
                      const NoiseModel& noise, const AreOptions& opts) {
  const int g = static_cast<int>(E_p.rows());
  SteadyState ss;
  ss.Q_term = symmetrize(E_f * noise.S_d * E_f.transpose() + E_u * noise.S_u * E_u.transpose());
  Mat P = opts.P0 ? symmetrize(*opts.P0) : ss.Q_term;
  if (P.rows() != g || P.cols() != g)
    throw Error(ErrorKind::InvalidInput, "solve_are: P0 has the wrong shape");
  if (min_eig(P) < -kClampTol) throw Error(ErrorKind::NotPsd, "solve_are: P0 is not PSD");

  double change = 0;
  bool converged = false;
  int it = 0;
  while (it < opts.max_iter) {
    ++it;
    const Mat prior = symmetrize(E_p * P * E_p.transpose() + ss.Q_term);
    const GainUpdate gu = gain_and_update(H, prior, noise.S_n);
    change = (gu.P_post - P).norm() / std::max(1.0, gu.P_post.norm());
    P = gu.P_post;
    if (change < opts.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "solve_are: no convergence in " << opts.max_iter << " iterations (last change " << change
       << ")";
    throw Error(ErrorKind::NonConvergence, os.str(), change);
  }
  ss.P = P;
  ss.iterations = it;
  ss.A_term = H * E_p;
  ss.R_term = symmetrize(H * ss.Q_term * H.transpose() + noise.S_n);
  ss.T_term = H * ss.Q_term;
  const Mat B = ss.A_term * P * E_p.transpose() + ss.T_term;
  const Mat S = symmetrize(ss.A_term * P * ss.A_term.transpose() + ss.R_term);
  Eigen::LLT<Mat> llt(S);
  ss.N_term = symmetrize(B.transpose() * llt.solve(B));
  ss.K_inf = llt.solve(B).transpose();
  ss.residual = are_residual(P, E_p, ss.Q_term, ss.N_term);
  return ss;
}

SteadyState solve_are(const ParamDynamics& dyn, const BehaviorBasis& basis,
                      const NoiseModel& noise, const AreOptions& opts) {
  return solve_are(dyn.E_p, dyn.E_f, dyn.E_u, basis.PiF_f(), noise, opts);
}

void write_steady_state_report(std::ostream& os, const SteadyState& ss,
                               const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) os << "# " << h << "\n";
  char buf[64];
  os << "iterations " << ss.iterations << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", ss.residual);
  os << "residual " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", ss.P.trace());
  os << "trace " << buf << "\n";
  const SymEig es = sym_eig(ss.P);
  os << "eigenvalues " << es.values.size() << "\n";
  for (Eigen::Index i = 0; i < es.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", es.values(i));
    os << buf << "\n";
  }
}

}  // namespace probgain
