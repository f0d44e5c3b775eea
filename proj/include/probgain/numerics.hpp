#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace probgain {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class ErrorKind {
  InvalidInput,
  NotPsd,
  InvalidBasis,
  InvalidDepth,
  NotExciting,
  InconsistentLayout,
  IllConditioned,
  SingularInnovation,
  NonConvergence,
  InvalidHistory,
  EmptyCohort,
  UndefinedRho,
  Schema,
  Usage,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, double value = 0.0)
      : std::runtime_error(what), kind_(kind), value_(value) {}
  ErrorKind kind() const { return kind_; }
  // offending quantity when one exists (eigenvalue, residual, index)
  double value() const { return value_; }

 private:
  ErrorKind kind_;
  double value_;
};

constexpr double kRankTol = 1e-9;
constexpr double kClampTol = 1e-8;

void require_finite(const Mat& A, const std::string& what);
Mat symmetrize(const Mat& A);
Mat kron(const Mat& A, const Mat& B);

// Eigenvalues sorted descending. Vectors inside a tie group are put in
// lexicographic order and every vector is sign-normalized so the first
// non-negligible entry is positive.
struct SymEig {
  Vec values;
  Mat vectors;
};
SymEig sym_eig(const Mat& A);

class SymMatrix {
 public:
  static constexpr double kSymTol = 1e-10;

  SymMatrix() = default;
  explicit SymMatrix(const Mat& A);
  static SymMatrix identity(int n) { return SymMatrix(Mat::Identity(n, n)); }
  static SymMatrix zero(int n) { return SymMatrix(Mat::Zero(n, n)); }

  int n() const { return static_cast<int>(a_.rows()); }
  const Mat& mat() const { return a_; }
  operator const Mat&() const { return a_; }
  SymEig eig() const { return sym_eig(a_); }
  double min_eig() const;

 private:
  Mat a_;
};

double min_eig(const Mat& A);
double max_eig(const Mat& A);
double spectral_radius(const Mat& A);

struct Pseudoinverse {
  Mat pinv;
  int rank = 0;
  Mat perp_left;   // I - A A^+
  Mat perp_right;  // I - A^+ A
};

Mat pinv(const Mat& A, double rank_tol = kRankTol);
Pseudoinverse pinv_full(const Mat& A, double rank_tol = kRankTol);
int numerical_rank(const Mat& A, double rank_tol = kRankTol);

// Orthonormal basis of the directions whose singular value is below
// rel_tol * sigma_max (including the structurally missing ones).
Mat null_space(const Mat& A, double rel_tol);

Mat psd_sqrt(const Mat& A, double clamp_tol = kClampTol);

// inverse of a symmetric positive definite matrix; throws IllConditioned when
// the eigenvalue ratio exceeds cond_cap
Mat spd_inverse(const Mat& A, double cond_cap = 1e10);

double chordal_distance(const Mat& U, const Mat& V);
Mat orthonormalize(const Mat& A);

// v1' Q v1 + 2 v1' S v2 - v2' R v2 + eta' v1 + mu' v2 + beta
struct QuadraticForm {
  Mat Q;
  Mat R;
  Mat S;
  Vec eta;
  Vec mu;
  double beta = 0.0;

  int n1() const { return static_cast<int>(Q.rows()); }
  int n2() const { return static_cast<int>(R.rows()); }
  void validate() const;
  double value(const Vec& v1, const Vec& v2) const;
};

struct FreedomSolution {
  Mat K;
  Vec xi;
  bool feasible = false;
  double tau = 0.0;
  double min_eig = 0.0;  // smallest eigenvalue of the freedom matrix
};

Mat freedom_matrix(const QuadraticForm& qf, double tau, double rank_tol = kRankTol);
FreedomSolution quadratic_freedom_solve(const QuadraticForm& qf, double tau, double tol = 1e-9);
std::vector<double> default_tau_scan();
FreedomSolution quadratic_freedom_scan(const QuadraticForm& qf,
                                       const std::vector<double>& taus = default_tau_scan(),
                                       double tol = 1e-9);

}  // namespace probgain
