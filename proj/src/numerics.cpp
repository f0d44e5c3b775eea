#include "probgain/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace probgain {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::NotPsd: return "not-psd";
    case ErrorKind::InvalidBasis: return "invalid-basis";
    case ErrorKind::InvalidDepth: return "invalid-depth";
    case ErrorKind::NotExciting: return "not-exciting";
    case ErrorKind::InconsistentLayout: return "inconsistent-layout";
    case ErrorKind::IllConditioned: return "ill-conditioned";
    case ErrorKind::SingularInnovation: return "singular-innovation";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::InvalidHistory: return "invalid-history";
    case ErrorKind::EmptyCohort: return "empty-cohort";
    case ErrorKind::UndefinedRho: return "undefined-rho";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

void require_finite(const Mat& A, const std::string& what) {
  if (!A.allFinite()) throw Error(ErrorKind::InvalidInput, what + ": non-finite entries");
}

Mat symmetrize(const Mat& A) { return 0.5 * (A + A.transpose()); }

Mat kron(const Mat& A, const Mat& B) {
  Mat K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

namespace {

void sign_normalize(Eigen::Ref<Vec> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::abs(a(i) - b(i)) > 1e-12) return a(i) < b(i);
  }
  return false;
}

}  // namespace

SymEig sym_eig(const Mat& A) {
  if (A.rows() != A.cols()) throw Error(ErrorKind::InvalidInput, "sym_eig: matrix not square");
  require_finite(A, "sym_eig");
  const int n = static_cast<int>(A.rows());
  SymEig out;
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(A));
  // Eigen sorts ascending
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  for (int j = 0; j < n; ++j) sign_normalize(out.vectors.col(j));

  const double scale = std::max(1.0, out.values.cwiseAbs().maxCoeff());
  int start = 0;
  while (start < n) {
    int end = start + 1;
    while (end < n && out.values(start) - out.values(end) <= 1e-12 * scale) ++end;
    if (end - start > 1) {
      std::vector<int> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      std::vector<Vec> cols;
      for (int k : idx) cols.push_back(out.vectors.col(k));
      std::vector<int> order(idx.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return lex_less(cols[b], cols[a]); });
      for (size_t k = 0; k < order.size(); ++k) out.vectors.col(start + k) = cols[order[k]];
    }
    start = end;
  }
  return out;
}

SymMatrix::SymMatrix(const Mat& A) {
  if (A.rows() != A.cols()) throw Error(ErrorKind::InvalidInput, "SymMatrix: not square");
  require_finite(A, "SymMatrix");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  const double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6 * scale)
    throw Error(ErrorKind::InvalidInput, "SymMatrix: input is not symmetric", asym);
  a_ = symmetrize(A);
}

double SymMatrix::min_eig() const { return probgain::min_eig(a_); }

double min_eig(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(A), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_eig(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(A), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(A.rows() - 1);
}

double spectral_radius(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Pseudoinverse pinv_full(const Mat& A, double rank_tol) {
  require_finite(A, "pinv");
  Pseudoinverse out;
  const Eigen::Index r = A.rows(), c = A.cols();
  out.pinv = Mat::Zero(c, r);
  if (A.size() > 0) {
    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();
    const double cut = s.size() > 0 ? rank_tol * s(0) : 0.0;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      if (s(k) > cut && s(k) > 0.0) {
        out.pinv += svd.matrixV().col(k) * (1.0 / s(k)) * svd.matrixU().col(k).transpose();
        ++out.rank;
      }
    }
  }
  out.perp_left = Mat::Identity(r, r) - A * out.pinv;
  out.perp_right = Mat::Identity(c, c) - out.pinv * A;
  return out;
}

Mat pinv(const Mat& A, double rank_tol) { return pinv_full(A, rank_tol).pinv; }

int numerical_rank(const Mat& A, double rank_tol) {
  require_finite(A, "numerical_rank");
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  if (s(0) <= 0.0) return 0;
  int rank = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) > rank_tol * s(0)) ++rank;
  return rank;
}

Mat null_space(const Mat& A, double rel_tol) {
  require_finite(A, "null_space");
  const Eigen::Index c = A.cols();
  if (A.rows() == 0) return Mat::Identity(c, c);
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double cut = s.size() > 0 ? rel_tol * s(0) : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < c; ++k) {
    if (k >= s.size() || s(k) <= cut) keep.push_back(k);
  }
  Mat N(c, static_cast<Eigen::Index>(keep.size()));
  for (size_t j = 0; j < keep.size(); ++j) {
    N.col(j) = svd.matrixV().col(keep[j]);
    sign_normalize(N.col(j));
  }
  return N;
}

Mat psd_sqrt(const Mat& A, double clamp_tol) {
  if (A.rows() != A.cols()) throw Error(ErrorKind::InvalidInput, "psd_sqrt: not square");
  require_finite(A, "psd_sqrt");
  if (A.size() == 0) return A;
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(A));
  Vec ev = es.eigenvalues();
  if (ev(0) < -clamp_tol) {
    std::ostringstream os;
    os << "psd_sqrt: eigenvalue " << ev(0) << " below -" << clamp_tol;
    throw Error(ErrorKind::NotPsd, os.str(), ev(0));
  }
  // eigenvalues at rounding level are zero; their square roots would not be
  const double floor = ev.size() * std::numeric_limits<double>::epsilon() * ev.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > floor ? std::sqrt(ev(i)) : 0.0;
  const Mat& V = es.eigenvectors();
  return symmetrize(V * ev.asDiagonal() * V.transpose());
}

Mat spd_inverse(const Mat& A, double cond_cap) {
  require_finite(A, "spd_inverse");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(A));
  const Vec& ev = es.eigenvalues();
  const double lo = ev(0), hi = ev(ev.size() - 1);
  if (lo <= 0.0 || hi / lo > cond_cap) {
    std::ostringstream os;
    os << "spd_inverse: eigenvalue range [" << lo << ", " << hi << "] exceeds condition cap "
       << cond_cap;
    throw Error(ErrorKind::IllConditioned, os.str(), lo > 0 ? hi / lo : lo);
  }
  const Mat& V = es.eigenvectors();
  return symmetrize(V * ev.cwiseInverse().asDiagonal() * V.transpose());
}

namespace {

void require_orthonormal(const Mat& U, const char* name) {
  require_finite(U, "chordal_distance");
  const Mat G = U.transpose() * U;
  const double err = (G - Mat::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
  if (err > 1e-6) {
    throw Error(ErrorKind::InvalidBasis,
                std::string("chordal_distance: columns of ") + name + " are not orthonormal", err);
  }
}

}  // namespace

double chordal_distance(const Mat& U, const Mat& V) {
  if (U.rows() != V.rows() || U.cols() != V.cols())
    throw Error(ErrorKind::InvalidBasis, "chordal_distance: bases have different shapes");
  require_orthonormal(U, "U");
  require_orthonormal(V, "V");
  // sqrt(sum sin^2 of principal angles); symmetric form averages both residuals
  const double a = (V - U * (U.transpose() * V)).norm();
  const double b = (U - V * (V.transpose() * U)).norm();
  return 0.5 * (a + b);
}

Mat orthonormalize(const Mat& A) {
  Eigen::HouseholderQR<Mat> qr(A);
  Mat Q = qr.householderQ() * Mat::Identity(A.rows(), A.cols());
  // keep the column orientation of A
  for (Eigen::Index j = 0; j < Q.cols(); ++j)
    if (Q.col(j).dot(A.col(j)) < 0) Q.col(j) = -Q.col(j);
  return Q;
}

void QuadraticForm::validate() const {
  const Eigen::Index a = Q.rows(), b = R.rows();
  if (Q.cols() != a || R.cols() != b || S.rows() != a || S.cols() != b || eta.size() != a ||
      mu.size() != b)
    throw Error(ErrorKind::InvalidInput, "QuadraticForm: inconsistent dimensions");
  require_finite(Q, "QuadraticForm.Q");
  require_finite(R, "QuadraticForm.R");
  require_finite(S, "QuadraticForm.S");
  if (!std::isfinite(beta)) throw Error(ErrorKind::InvalidInput, "QuadraticForm: beta not finite");
  const double lo = min_eig(R);
  if (lo < -kClampTol) throw Error(ErrorKind::NotPsd, "QuadraticForm: R is not PSD", lo);
}

double QuadraticForm::value(const Vec& v1, const Vec& v2) const {
  return v1.dot(Q * v1) + 2.0 * v1.dot(S * v2) - v2.dot(R * v2) + eta.dot(v1) + mu.dot(v2) + beta;
}

Mat freedom_matrix(const QuadraticForm& qf, double tau, double rank_tol) {
  qf.validate();
  const int a = qf.n1();
  const auto Rp = pinv_full(symmetrize(qf.R), rank_tol);
  const Mat G = Rp.pinv + tau * Rp.perp_left;
  Mat B(a + 1, qf.n2());
  B.row(0) = 0.5 * qf.mu.transpose();
  B.bottomRows(a) = qf.S;
  Mat H(a + 1, a + 1);
  H(0, 0) = qf.beta;
  H.block(1, 0, a, 1) = 0.5 * qf.eta;
  H.block(0, 1, 1, a) = 0.5 * qf.eta.transpose();
  H.bottomRightCorner(a, a) = qf.Q;
  return symmetrize(H + B * G * B.transpose());
}

FreedomSolution quadratic_freedom_solve(const QuadraticForm& qf, double tau, double tol) {
  const Mat H = freedom_matrix(qf, tau);
  FreedomSolution out;
  out.tau = tau;
  out.min_eig = min_eig(H);
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  out.feasible = out.min_eig >= -tol * scale;

  const auto Rp = pinv_full(symmetrize(qf.R));
  const Mat G = Rp.pinv + 0.5 * tau * Rp.perp_left;
  out.K = G * qf.S.transpose();
  if (qf.mu.cwiseAbs().maxCoeff() == 0.0) {
    out.xi = Vec::Zero(qf.n2());
    if (qf.beta < 0.0) out.feasible = false;
  } else {
    out.xi = 0.5 * G * qf.mu;
  }
  return out;
}

std::vector<double> default_tau_scan() {
  std::vector<double> taus{0.0};
  for (int k = -2; k <= 2; ++k) {
    taus.push_back(std::pow(10.0, k));
    taus.push_back(-std::pow(10.0, k));
  }
  return taus;
}

FreedomSolution quadratic_freedom_scan(const QuadraticForm& qf, const std::vector<double>& taus,
                                       double tol) {
  FreedomSolution best;
  bool have = false;
  for (double tau : taus) {
    FreedomSolution s = quadratic_freedom_solve(qf, tau, tol);
    if (s.feasible) return s;
    if (!have || s.min_eig > best.min_eig) {
      best = s;
      have = true;
    }
  }
  return best;
}

}  // namespace probgain
