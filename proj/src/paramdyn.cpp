#include "probgain/paramdyn.hpp"

#include <Eigen/SVD>

#include <limits>
#include <sstream>

namespace probgain {

ParamDynamics decompose(const BehaviorBasis& basis, const DecomposeOptions& opts) {
  const auto& l = basis.layout;
  const int g = basis.g_dim();
  const int q = l.q, m = l.m;
  if (basis.F.rows() != l.window_rows())
    throw Error(ErrorKind::InconsistentLayout, "decompose: basis rows do not match the layout");

  Mat A(l.L * l.w_dim() + q, g);
  A.topRows(l.L * l.w_dim()) = basis.F_wp();
  A.bottomRows(q) = basis.F_dk();

  Mat F_z = null_space(A, opts.null_tol);
  if (F_z.cols() != m) {
    std::ostringstream os;
    os << "decompose: null space of [F_wp; F_dk] has dimension " << F_z.cols() << ", expected "
       << m;
    throw Error(ErrorKind::InconsistentLayout, os.str(), double(F_z.cols()));
  }

  const Mat Ap = pinv(A, opts.null_tol);
  Mat rhs_p = Mat::Zero(A.rows(), g);
  rhs_p.topRows(l.L * l.w_dim()) = basis.PiF_p();
  Mat rhs_f = Mat::Zero(A.rows(), q);
  rhs_f.bottomRows(q).setIdentity();

  ParamDynamics dyn;
  dyn.F_p = Ap * rhs_p;
  dyn.F_f = Ap * rhs_f;
  dyn.F_z = F_z;

  const Mat G = basis.PiF_u() * F_z;
  Eigen::JacobiSVD<Mat> svd(G);
  const auto& s = svd.singularValues();
  dyn.uz_condition = s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1)
                                         : std::numeric_limits<double>::infinity();
  if (!(dyn.uz_condition <= opts.cond_max)) {
    std::ostringstream os;
    os << "decompose: Pi_u F F_z has condition number " << dyn.uz_condition << " > "
       << opts.cond_max;
    throw Error(ErrorKind::IllConditioned, os.str(), dyn.uz_condition);
  }
  const Mat Gi = G.inverse();
  const Mat proj = Mat::Identity(g, g) - F_z * Gi * basis.PiF_u();
  dyn.E_p = proj * dyn.F_p;
  dyn.E_f = proj * dyn.F_f;
  dyn.E_u = F_z * Gi;
  return dyn;
}

std::vector<Vec> simulate_parameterizer(const ParamDynamics& dyn, const Vec& g0,
                                        const std::vector<Vec>& d_seq,
                                        const std::vector<Vec>& z_seq) {
  if (d_seq.size() != z_seq.size())
    throw Error(ErrorKind::InvalidInput, "simulate_parameterizer: sequences differ in length");
  std::vector<Vec> out;
  out.reserve(d_seq.size());
  Vec g = g0;
  for (size_t k = 0; k < d_seq.size(); ++k) {
    g = dyn.F_p * g + dyn.F_f * d_seq[k] + dyn.F_z * z_seq[k];
    out.push_back(g);
  }
  return out;
}

}  // namespace probgain
