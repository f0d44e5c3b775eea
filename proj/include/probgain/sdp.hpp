#pragma once

#include "probgain/numerics.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace probgain::sdp {

using SpMat = Eigen::SparseMatrix<double>;

// Affine matrix expression C + sum_i y_i G_i over the scalar decision vector y.
class Expr {
 public:
  Expr() = default;
  Expr(int rows, int cols);
  static Expr constant(const Mat& C);
  static Expr zeros(int rows, int cols) { return Expr(rows, cols); }
  static Expr identity(int n) { return constant(Mat::Identity(n, n)); }
  static Expr scalar(double v);
  static Expr unit(int rows, int cols, int index, const SpMat& coeff);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Mat& constant_part() const { return c_; }
  const std::map<int, SpMat>& terms() const { return t_; }

  Expr transpose() const;
  Expr trace() const;
  // scalar expression s times the n x n identity
  static Expr scaled_identity(const Expr& s, int n);
  // rows of blocks; empty Expr entries are read as zero of the implied size
  static Expr blocks(const std::vector<std::vector<Expr>>& grid);
  // lower-triangular grid; the upper part is filled with transposes
  static Expr symmetric_blocks(const std::vector<std::vector<Expr>>& lower);

  Mat eval(const Vec& y) const;
  double eval_scalar(const Vec& y) const;
  bool empty() const { return rows_ == 0 && cols_ == 0; }

  Expr& operator+=(const Expr& o);
  Expr& operator-=(const Expr& o);
  Expr& operator*=(double s);

  friend Expr operator+(Expr a, const Expr& b) { return a += b; }
  friend Expr operator-(Expr a, const Expr& b) { return a -= b; }
  friend Expr operator-(Expr a) { return a *= -1.0; }
  friend Expr operator*(double s, Expr a) { return a *= s; }
  friend Expr operator*(Expr a, double s) { return a *= s; }
  friend Expr operator*(const Mat& A, const Expr& e);
  friend Expr operator*(const Expr& e, const Mat& A);

 private:
  int rows_ = 0;
  int cols_ = 0;
  Mat c_;
  std::map<int, SpMat> t_;
};

struct Variable {
  std::string name;
  int rows = 0;
  int cols = 0;
  bool symmetric = false;
  int offset = 0;
  int count = 0;
};

struct PsdConstraint {
  std::string label;
  Expr expr;
};

class Program {
 public:
  Expr add_symmetric(const std::string& name, int n);
  Expr add_matrix(const std::string& name, int rows, int cols);
  Expr add_scalar(const std::string& name);
  Expr variable(const std::string& name) const;
  bool has_variable(const std::string& name) const;

  // expr must be square and symmetric
  void add_psd(const std::string& label, const Expr& expr);
  // scalar expr >= 0
  void add_nonnegative(const std::string& label, const Expr& expr);
  void minimize(const Expr& objective);

  int num_scalars() const { return n_; }
  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<PsdConstraint>& psd_blocks() const { return psd_; }
  const std::vector<PsdConstraint>& linear_constraints() const { return lin_; }
  const std::optional<Expr>& objective() const { return obj_; }

  Mat value_of(const std::string& name, const Vec& y) const;
  // inverse of value_of over all variables; missing names are left at zero
  Vec point_from(const std::map<std::string, Mat>& values) const;
  void dump(std::ostream& os) const;

 private:
  const Variable& find(const std::string& name) const;
  Expr expr_of(const Variable& v) const;

  int n_ = 0;
  std::vector<Variable> vars_;
  std::vector<PsdConstraint> psd_;
  std::vector<PsdConstraint> lin_;
  std::optional<Expr> obj_;
};

enum class Status { Feasible, Infeasible, MaxIterations };
const char* to_string(Status s);

struct Verification {
  std::vector<double> block_min_eigs;
  std::vector<double> linear_values;
  double min_margin = 0;
};

// direct eigenvalue evaluation of every block at y
Verification verify(const Program& prog, const Vec& y);

struct Solution {
  Status status = Status::MaxIterations;
  std::map<std::string, Mat> assignments;
  Vec y;
  double min_eig_margin = 0;
  std::optional<double> objective_value;
  int iterations = 0;
  double phase1_margin = 0;  // optimal common shift of all constraints
  Verification check;
};

struct SolverOptions {
  double feas_tol = 1e-8;
  int max_iterations = 300;
  double gap_tol = 1e-9;
  double box = 1e6;  // |y_i| <= box keeps the feasibility phase bounded
  bool verbose = false;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Solution solve(const Program& prog, const SolverOptions& opts) const = 0;
};

// Primal-dual path following (HKM direction, Mehrotra corrector) in two
// phases: maximize the common margin, then minimize the objective from the
// resulting interior point.
class InteriorPointBackend : public Backend {
 public:
  Solution solve(const Program& prog, const SolverOptions& opts) const override;
};

Solution solve(const Program& prog, const SolverOptions& opts = {},
               const Backend* backend = nullptr);

}  // namespace probgain::sdp
