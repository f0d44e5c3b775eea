#include "probgain/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace probgain::sdp {

// ---------------------------------------------------------------- Expr

Expr::Expr(int rows, int cols) : rows_(rows), cols_(cols), c_(Mat::Zero(rows, cols)) {}

Expr Expr::constant(const Mat& C) {
  Expr e(static_cast<int>(C.rows()), static_cast<int>(C.cols()));
  e.c_ = C;
  return e;
}

Expr Expr::scalar(double v) {
  Expr e(1, 1);
  e.c_(0, 0) = v;
  return e;
}

Expr Expr::unit(int rows, int cols, int index, const SpMat& coeff) {
  Expr e(rows, cols);
  e.t_[index] = coeff;
  return e;
}

Expr& Expr::operator+=(const Expr& o) {
  if (empty()) return *this = o;
  if (o.empty()) return *this;
  if (rows_ != o.rows_ || cols_ != o.cols_)
    throw Error(ErrorKind::InvalidInput, "Expr: adding expressions of different shapes");
  c_ += o.c_;
  for (const auto& [k, S] : o.t_) {
    auto it = t_.find(k);
    if (it == t_.end())
      t_.emplace(k, S);
    else
      it->second += S;
  }
  return *this;
}

Expr& Expr::operator-=(const Expr& o) { return *this += (-1.0) * o; }

Expr& Expr::operator*=(double s) {
  c_ *= s;
  for (auto& [k, S] : t_) S *= s;
  return *this;
}

Expr operator*(const Mat& A, const Expr& e) {
  if (A.cols() != e.rows_) throw Error(ErrorKind::InvalidInput, "Expr: left product shape mismatch");
  Expr out(static_cast<int>(A.rows()), e.cols_);
  out.c_ = A * e.c_;
  for (const auto& [k, S] : e.t_) {
    Mat d = A * S;
    SpMat s = d.sparseView();
    if (s.nonZeros() > 0) out.t_.emplace(k, std::move(s));
  }
  return out;
}

Expr operator*(const Expr& e, const Mat& A) {
  if (e.cols_ != A.rows()) throw Error(ErrorKind::InvalidInput, "Expr: right product shape mismatch");
  Expr out(e.rows_, static_cast<int>(A.cols()));
  out.c_ = e.c_ * A;
  for (const auto& [k, S] : e.t_) {
    Mat d = S * A;
    SpMat s = d.sparseView();
    if (s.nonZeros() > 0) out.t_.emplace(k, std::move(s));
  }
  return out;
}

Expr Expr::transpose() const {
  Expr out(cols_, rows_);
  out.c_ = c_.transpose();
  for (const auto& [k, S] : t_) out.t_.emplace(k, SpMat(S.transpose()));
  return out;
}

Expr Expr::trace() const {
  if (rows_ != cols_) throw Error(ErrorKind::InvalidInput, "Expr: trace of a non-square expression");
  Expr out(1, 1);
  out.c_(0, 0) = c_.trace();
  for (const auto& [k, S] : t_) {
    double v = 0;
    for (int j = 0; j < S.outerSize(); ++j)
      for (SpMat::InnerIterator it(S, j); it; ++it)
        if (it.row() == it.col()) v += it.value();
    if (v != 0.0) {
      SpMat s(1, 1);
      s.insert(0, 0) = v;
      out.t_.emplace(k, std::move(s));
    }
  }
  return out;
}

Expr Expr::scaled_identity(const Expr& s, int n) {
  if (s.rows_ != 1 || s.cols_ != 1)
    throw Error(ErrorKind::InvalidInput, "Expr: scaled_identity needs a scalar expression");
  Expr out(n, n);
  out.c_ = s.c_(0, 0) * Mat::Identity(n, n);
  for (const auto& [k, S] : s.t_) {
    const double v = S.coeff(0, 0);
    SpMat I(n, n);
    I.setIdentity();
    out.t_.emplace(k, v * I);
  }
  return out;
}

Expr Expr::blocks(const std::vector<std::vector<Expr>>& grid) {
  const size_t R = grid.size();
  if (R == 0) return Expr();
  const size_t C = grid[0].size();
  std::vector<int> h(R, -1), w(C, -1);
  for (size_t i = 0; i < R; ++i) {
    if (grid[i].size() != C) throw Error(ErrorKind::InvalidInput, "Expr: ragged block grid");
    for (size_t j = 0; j < C; ++j) {
      const Expr& e = grid[i][j];
      if (e.empty()) continue;
      if ((h[i] >= 0 && h[i] != e.rows_) || (w[j] >= 0 && w[j] != e.cols_))
        throw Error(ErrorKind::InvalidInput, "Expr: inconsistent block sizes");
      h[i] = e.rows_;
      w[j] = e.cols_;
    }
  }
  for (size_t i = 0; i < R; ++i)
    if (h[i] < 0) throw Error(ErrorKind::InvalidInput, "Expr: block row has no sized entry");
  for (size_t j = 0; j < C; ++j)
    if (w[j] < 0) throw Error(ErrorKind::InvalidInput, "Expr: block column has no sized entry");
  std::vector<int> ro(R + 1, 0), co(C + 1, 0);
  for (size_t i = 0; i < R; ++i) ro[i + 1] = ro[i] + h[i];
  for (size_t j = 0; j < C; ++j) co[j + 1] = co[j] + w[j];

  Expr out(ro[R], co[C]);
  std::map<int, std::vector<Eigen::Triplet<double>>> trips;
  for (size_t i = 0; i < R; ++i) {
    for (size_t j = 0; j < C; ++j) {
      const Expr& e = grid[i][j];
      if (e.empty()) continue;
      out.c_.block(ro[i], co[j], h[i], w[j]) = e.c_;
      for (const auto& [k, S] : e.t_) {
        auto& v = trips[k];
        for (int c = 0; c < S.outerSize(); ++c)
          for (SpMat::InnerIterator it(S, c); it; ++it)
            v.emplace_back(ro[i] + it.row(), co[j] + it.col(), it.value());
      }
    }
  }
  for (auto& [k, v] : trips) {
    SpMat S(out.rows_, out.cols_);
    S.setFromTriplets(v.begin(), v.end());
    out.t_.emplace(k, std::move(S));
  }
  return out;
}

Expr Expr::symmetric_blocks(const std::vector<std::vector<Expr>>& lower) {
  const size_t R = lower.size();
  std::vector<std::vector<Expr>> grid(R, std::vector<Expr>(R));
  for (size_t i = 0; i < R; ++i) {
    if (lower[i].size() != i + 1)
      throw Error(ErrorKind::InvalidInput, "Expr: lower block grid must be triangular");
    for (size_t j = 0; j <= i; ++j) {
      grid[i][j] = lower[i][j];
      if (j < i && !lower[i][j].empty()) grid[j][i] = lower[i][j].transpose();
    }
  }
  return blocks(grid);
}

Mat Expr::eval(const Vec& y) const {
  Mat out = c_;
  for (const auto& [k, S] : t_) {
    if (k >= y.size()) throw Error(ErrorKind::InvalidInput, "Expr: decision vector too short");
    out += y(k) * Mat(S);
  }
  return out;
}

double Expr::eval_scalar(const Vec& y) const {
  if (rows_ != 1 || cols_ != 1) throw Error(ErrorKind::InvalidInput, "Expr: not a scalar");
  double v = c_(0, 0);
  for (const auto& [k, S] : t_) v += y(k) * S.coeff(0, 0);
  return v;
}

// ---------------------------------------------------------------- Program

const Variable& Program::find(const std::string& name) const {
  for (const auto& v : vars_)
    if (v.name == name) return v;
  throw Error(ErrorKind::InvalidInput, "Program: unknown variable '" + name + "'");
}

bool Program::has_variable(const std::string& name) const {
  for (const auto& v : vars_)
    if (v.name == name) return true;
  return false;
}

Expr Program::expr_of(const Variable& v) const {
  Expr e(v.rows, v.cols);
  int k = v.offset;
  if (v.symmetric) {
    for (int b = 0; b < v.cols; ++b) {
      for (int a = 0; a <= b; ++a, ++k) {
        SpMat S(v.rows, v.cols);
        S.insert(a, b) = 1.0;
        if (a != b) S.insert(b, a) = 1.0;
        e += Expr::unit(v.rows, v.cols, k, S);
      }
    }
  } else {
    for (int b = 0; b < v.cols; ++b) {
      for (int a = 0; a < v.rows; ++a, ++k) {
        SpMat S(v.rows, v.cols);
        S.insert(a, b) = 1.0;
        e += Expr::unit(v.rows, v.cols, k, S);
      }
    }
  }
  return e;
}

Expr Program::add_symmetric(const std::string& name, int n) {
  if (has_variable(name)) throw Error(ErrorKind::InvalidInput, "Program: duplicate variable " + name);
  Variable v{name, n, n, true, n_, n * (n + 1) / 2};
  n_ += v.count;
  vars_.push_back(v);
  return expr_of(v);
}

Expr Program::add_matrix(const std::string& name, int rows, int cols) {
  if (has_variable(name)) throw Error(ErrorKind::InvalidInput, "Program: duplicate variable " + name);
  Variable v{name, rows, cols, false, n_, rows * cols};
  n_ += v.count;
  vars_.push_back(v);
  return expr_of(v);
}

Expr Program::add_scalar(const std::string& name) { return add_matrix(name, 1, 1); }

Expr Program::variable(const std::string& name) const { return expr_of(find(name)); }

void Program::add_psd(const std::string& label, const Expr& expr) {
  if (expr.rows() != expr.cols())
    throw Error(ErrorKind::InvalidInput, "Program: PSD block '" + label + "' is not square");
  const double scale = std::max(1.0, expr.constant_part().cwiseAbs().maxCoeff());
  double asym = (expr.constant_part() - expr.constant_part().transpose()).cwiseAbs().maxCoeff();
  for (const auto& [k, S] : expr.terms())
    asym = std::max(asym, Mat(SpMat(S - SpMat(S.transpose()))).cwiseAbs().maxCoeff());
  if (asym > 1e-9 * scale)
    throw Error(ErrorKind::InvalidInput, "Program: PSD block '" + label + "' is not symmetric",
                asym);
  psd_.push_back({label, expr});
}

void Program::add_nonnegative(const std::string& label, const Expr& expr) {
  if (expr.rows() != 1 || expr.cols() != 1)
    throw Error(ErrorKind::InvalidInput, "Program: linear constraint '" + label + "' not scalar");
  lin_.push_back({label, expr});
}

void Program::minimize(const Expr& objective) {
  if (objective.rows() != 1 || objective.cols() != 1)
    throw Error(ErrorKind::InvalidInput, "Program: objective must be scalar");
  obj_ = objective;
}

Mat Program::value_of(const std::string& name, const Vec& y) const {
  const Variable& v = find(name);
  Mat out(v.rows, v.cols);
  int k = v.offset;
  if (v.symmetric) {
    for (int b = 0; b < v.cols; ++b)
      for (int a = 0; a <= b; ++a, ++k) out(a, b) = out(b, a) = y(k);
  } else {
    for (int b = 0; b < v.cols; ++b)
      for (int a = 0; a < v.rows; ++a, ++k) out(a, b) = y(k);
  }
  return out;
}

Vec Program::point_from(const std::map<std::string, Mat>& values) const {
  Vec y = Vec::Zero(n_);
  for (const auto& v : vars_) {
    auto it = values.find(v.name);
    if (it == values.end()) continue;
    const Mat& A = it->second;
    if (A.rows() != v.rows || A.cols() != v.cols)
      throw Error(ErrorKind::InvalidInput, "Program: value for '" + v.name + "' has wrong shape");
    int k = v.offset;
    for (int b = 0; b < v.cols; ++b)
      for (int a = 0; a < (v.symmetric ? b + 1 : v.rows); ++a, ++k)
        y(k) = v.symmetric && a != b ? 0.5 * (A(a, b) + A(b, a)) : A(a, b);
  }
  return y;
}

void Program::dump(std::ostream& os) const {
  os << "variables " << vars_.size() << " scalars " << n_ << "\n";
  for (const auto& v : vars_)
    os << "  " << v.name << " " << v.rows << "x" << v.cols << (v.symmetric ? " symmetric" : "")
       << " offset " << v.offset << " count " << v.count << "\n";
  auto describe = [&](const PsdConstraint& c) {
    size_t nnz = 0;
    for (const auto& [k, S] : c.expr.terms()) nnz += static_cast<size_t>(S.nonZeros());
    std::ostringstream s;
    s << "  " << c.label << " " << c.expr.rows() << "x" << c.expr.cols() << " terms "
      << c.expr.terms().size() << " nnz " << nnz << " |C|max "
      << (c.expr.constant_part().size() ? c.expr.constant_part().cwiseAbs().maxCoeff() : 0.0);
    return s.str();
  };
  os << "psd_blocks " << psd_.size() << "\n";
  for (const auto& c : psd_) os << describe(c) << "\n";
  os << "linear_constraints " << lin_.size() << "\n";
  for (const auto& c : lin_) {
    os << describe(c) << "  const " << c.expr.constant_part()(0, 0);
    for (const auto& [k, S] : c.expr.terms()) os << " +" << S.coeff(0, 0) << "*y" << k;
    os << "\n";
  }
  if (obj_) {
    os << "objective minimize const " << obj_->constant_part()(0, 0);
    for (const auto& [k, S] : obj_->terms()) os << " +" << S.coeff(0, 0) << "*y" << k;
    os << "\n";
  } else {
    os << "objective none (maximize common margin)\n";
  }
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Feasible: return "feasible";
    case Status::Infeasible: return "infeasible";
    case Status::MaxIterations: return "max-iterations";
  }
  return "unknown";
}

Verification verify(const Program& prog, const Vec& y) {
  Verification v;
  v.min_margin = std::numeric_limits<double>::infinity();
  for (const auto& b : prog.psd_blocks()) {
    const double e = min_eig(b.expr.eval(y));
    v.block_min_eigs.push_back(e);
    v.min_margin = std::min(v.min_margin, e);
  }
  for (const auto& c : prog.linear_constraints()) {
    const double e = c.expr.eval_scalar(y);
    v.linear_values.push_back(e);
    v.min_margin = std::min(v.min_margin, e);
  }
  if (!std::isfinite(v.min_margin)) v.min_margin = 0;
  return v;
}

// ---------------------------------------------------------------- solver

namespace {

struct Trip {
  int r, c;
  double v;
};

struct BlockTerm {
  int var = 0;
  std::vector<int> rows;   // distinct rows touched
  std::vector<Trip> e;     // full (both triangles) storage
  std::vector<int> rpos;   // index into rows for each entry
};

struct DenseBlock {
  int n = 0;
  Mat C;
  std::vector<BlockTerm> terms;
};

struct LpRow {
  double c = 0;
  std::vector<std::pair<int, double>> a;
};

// maximize b'y  s.t.  C_k - sum_i y_i A_ki >= 0,  c_l - a_l'y >= 0
struct StdForm {
  int nvar = 0;
  Vec b;
  std::vector<DenseBlock> blocks;
  std::vector<LpRow> rows;
};

BlockTerm make_term(int var, const SpMat& A, double sign) {
  BlockTerm t;
  t.var = var;
  for (int c = 0; c < A.outerSize(); ++c)
    for (SpMat::InnerIterator it(A, c); it; ++it)
      if (it.value() != 0.0)
        t.e.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), sign * it.value()});
  std::vector<int> rows;
  for (const auto& e : t.e) rows.push_back(e.r);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  t.rows = rows;
  for (const auto& e : t.e)
    t.rpos.push_back(static_cast<int>(std::lower_bound(rows.begin(), rows.end(), e.r) - rows.begin()));
  return t;
}

void add_block(StdForm& s, const Expr& e, int shift_var) {
  if (e.rows() == 1) {
    LpRow row;
    row.c = e.constant_part()(0, 0);
    for (const auto& [k, S] : e.terms()) row.a.push_back({k, -S.coeff(0, 0)});
    if (shift_var >= 0) row.a.push_back({shift_var, 1.0});
    s.rows.push_back(row);
    return;
  }
  DenseBlock b;
  b.n = e.rows();
  b.C = symmetrize(e.constant_part());
  for (const auto& [k, S] : e.terms()) {
    BlockTerm t = make_term(k, S, -1.0);
    if (!t.e.empty()) b.terms.push_back(std::move(t));
  }
  if (shift_var >= 0) {
    SpMat I(b.n, b.n);
    I.setIdentity();
    b.terms.push_back(make_term(shift_var, I, 1.0));
  }
  s.blocks.push_back(std::move(b));
}

Mat dual_slack(const DenseBlock& b, const Vec& y) {
  Mat Z = b.C;
  for (const auto& t : b.terms) {
    const double v = y(t.var);
    if (v == 0.0) continue;
    for (const auto& e : t.e) Z(e.r, e.c) -= v * e.v;
  }
  return Z;
}

double row_slack(const LpRow& r, const Vec& y) {
  double z = r.c;
  for (const auto& [k, a] : r.a) z -= a * y(k);
  return z;
}

double inner(const BlockTerm& t, const Mat& G) {
  double s = 0;
  for (const auto& e : t.e) s += e.v * G(e.r, e.c);
  return s;
}

// largest step in [0, inf) keeping S + a dS PSD, given the Cholesky factor of S
double max_step(const Eigen::LLT<Mat>& llt, const Mat& dS) {
  const auto& L = llt.matrixL();
  Mat T = L.solve(dS);
  T = L.solve(T.transpose()).transpose();
  const double lo = min_eig(symmetrize(T));
  return lo < 0 ? -1.0 / lo : std::numeric_limits<double>::infinity();
}

struct IpmResult {
  Vec y;
  int iterations = 0;
  bool converged = false;
  bool infeasible = false;
  double pobj = 0;
  double dobj = 0;
};

IpmResult run_ipm(const StdForm& s, Vec y, const SolverOptions& o, bool feasibility_phase,
                  double infeasible_below) {
  const int n = s.nvar;
  const size_t K = s.blocks.size(), R = s.rows.size();
  std::vector<Mat> X(K), Z(K), Zi(K);
  Vec x(R), z(R);
  int total_dim = static_cast<int>(R);
  for (size_t k = 0; k < K; ++k) {
    Z[k] = dual_slack(s.blocks[k], y);
    Eigen::LLT<Mat> llt(Z[k]);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorKind::InvalidInput, "sdp: starting point is not interior");
    X[k] = llt.solve(Mat::Identity(Z[k].rows(), Z[k].cols()));
    total_dim += s.blocks[k].n;
  }
  for (size_t l = 0; l < R; ++l) {
    z(l) = row_slack(s.rows[l], y);
    if (!(z(l) > 0)) throw Error(ErrorKind::InvalidInput, "sdp: starting point violates a row");
    x(l) = 1.0 / z(l);
  }

  IpmResult res;
  const double bnorm = s.b.norm();
  double last_gap = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 0; it < o.max_iterations; ++it) {
    res.iterations = it;
    std::vector<Eigen::LLT<Mat>> zl(K);
    for (size_t k = 0; k < K; ++k) {
      Z[k] = symmetrize(dual_slack(s.blocks[k], y));
      zl[k].compute(Z[k]);
      Zi[k] = symmetrize(zl[k].solve(Mat::Identity(Z[k].rows(), Z[k].cols())));
    }
    for (size_t l = 0; l < R; ++l) z(l) = row_slack(s.rows[l], y);

    Vec AX = Vec::Zero(n);
    double pobj = 0, gap = 0;
    for (size_t k = 0; k < K; ++k) {
      for (const auto& t : s.blocks[k].terms) AX(t.var) += inner(t, X[k]);
      pobj += (s.blocks[k].C.array() * X[k].array()).sum();
      gap += (X[k].array() * Z[k].array()).sum();
    }
    for (size_t l = 0; l < R; ++l) {
      for (const auto& [k, a] : s.rows[l].a) AX(k) += a * x(l);
      pobj += s.rows[l].c * x(l);
      gap += x(l) * z(l);
    }
    const Vec rp = s.b - AX;
    const double dobj = s.b.dot(y);
    const double mu = gap / total_dim;
    const double pinf = rp.norm() / (1.0 + bnorm);
    const double rel_gap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));
    res.pobj = pobj;
    res.dobj = dobj;
    if (o.verbose)
      std::fprintf(stderr, "  it %3d dobj %+.10e pobj %+.10e gap %.3e pinf %.3e\n", it, dobj, pobj,
                   rel_gap, pinf);
    if (pinf < 1e-8 && rel_gap < o.gap_tol) {
      res.converged = true;
      break;
    }
    if (feasibility_phase && pinf < 1e-7 && pobj < infeasible_below) {
      res.infeasible = true;
      break;
    }
    // no progress at a nearly optimal point: accept at reduced accuracy
    stalled = (rel_gap < 1e-5 && rel_gap > 0.9 * last_gap) ? stalled + 1 : 0;
    last_gap = std::min(last_gap, rel_gap);
    if (stalled >= 8) {
      res.converged = pinf < 1e-7 && rel_gap < 1e-6;
      break;
    }

    // Schur complement and <A_i, Z^-1>
    Mat M = Mat::Zero(n, n);
    Vec aZi = Vec::Zero(n);
    for (size_t k = 0; k < K; ++k) {
      const auto& blk = s.blocks[k];
      const int bn = blk.n;
      for (size_t j = 0; j < blk.terms.size(); ++j) {
        const auto& tj = blk.terms[j];
        aZi(tj.var) += inner(tj, Zi[k]);
        Mat T = Mat::Zero(tj.rows.size(), bn);
        for (size_t e = 0; e < tj.e.size(); ++e) T.row(tj.rpos[e]) += tj.e[e].v * Zi[k].row(tj.e[e].c);
        Mat Xs(bn, tj.rows.size());
        for (size_t r = 0; r < tj.rows.size(); ++r) Xs.col(r) = X[k].col(tj.rows[r]);
        const Mat G = Xs * T;  // X A_j Z^-1
        for (size_t i = j; i < blk.terms.size(); ++i) {
          const auto& ti = blk.terms[i];
          double v = 0;
          for (const auto& e : ti.e) v += e.v * G(e.c, e.r);
          M(ti.var, tj.var) += v;
          if (ti.var != tj.var || i != j) M(tj.var, ti.var) += (i == j ? 0.0 : v);
        }
      }
    }
    for (size_t l = 0; l < R; ++l) {
      const double w = x(l) / z(l);
      for (const auto& [a, va] : s.rows[l].a) {
        aZi(a) += va / z(l);
        for (const auto& [b, vb] : s.rows[l].a) M(a, b) += w * va * vb;
      }
    }
    M = symmetrize(M);
    Eigen::LLT<Mat> mllt(M);
    double reg = 0;
    const double mscale = std::max(1e-300, M.diagonal().cwiseAbs().maxCoeff());
    while (mllt.info() != Eigen::Success) {
      reg = reg == 0 ? 1e-14 * mscale : reg * 100;
      mllt.compute(M + reg * Mat::Identity(n, n));
      if (reg > 1e-2 * mscale) break;
    }
    if (mllt.info() != Eigen::Success) break;

    auto directions = [&](const Vec& dy, double sm, const std::vector<Mat>* dXa,
                          const std::vector<Mat>* dZa, const Vec* dxa, const Vec* dza,
                          std::vector<Mat>& dX, std::vector<Mat>& dZ, Vec& dx, Vec& dz) {
      dX.resize(K);
      dZ.resize(K);
      for (size_t k = 0; k < K; ++k) {
        const auto& blk = s.blocks[k];
        Mat D = Mat::Zero(blk.n, blk.n);
        for (const auto& t : blk.terms) {
          const double v = dy(t.var);
          if (v == 0.0) continue;
          for (const auto& e : t.e) D(e.r, e.c) -= v * e.v;
        }
        dZ[k] = D;
        Mat dXk = sm * Zi[k] - X[k] - symmetrize(X[k] * D * Zi[k]);
        if (dXa) dXk -= symmetrize((*dXa)[k] * (*dZa)[k] * Zi[k]);
        dX[k] = symmetrize(dXk);
      }
      dz.resize(R);
      dx.resize(R);
      for (size_t l = 0; l < R; ++l) {
        double d = 0;
        for (const auto& [k, a] : s.rows[l].a) d -= a * dy(k);
        dz(l) = d;
        double v = sm / z(l) - x(l) - x(l) * d / z(l);
        if (dxa) v -= (*dxa)(l) * (*dza)(l) / z(l);
        dx(l) = v;
      }
    };
    auto steps = [&](const std::vector<Mat>& dX, const std::vector<Mat>& dZ, const Vec& dx,
                     const Vec& dz, double& ap, double& ad) {
      ap = ad = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < K; ++k) {
        Eigen::LLT<Mat> xl(X[k]);
        ap = std::min(ap, max_step(xl, dX[k]));
        ad = std::min(ad, max_step(zl[k], dZ[k]));
      }
      for (size_t l = 0; l < R; ++l) {
        if (dx(l) < 0) ap = std::min(ap, -x(l) / dx(l));
        if (dz(l) < 0) ad = std::min(ad, -z(l) / dz(l));
      }
    };

    // predictor
    Vec dy = mllt.solve(s.b);
    std::vector<Mat> dXa, dZa;
    Vec dxa, dza;
    directions(dy, 0.0, nullptr, nullptr, nullptr, nullptr, dXa, dZa, dxa, dza);
    double ap, ad;
    steps(dXa, dZa, dxa, dza, ap, ad);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double gap_aff = 0;
    for (size_t k = 0; k < K; ++k)
      gap_aff += ((X[k] + ap * dXa[k]).array() * (Z[k] + ad * dZa[k]).array()).sum();
    for (size_t l = 0; l < R; ++l) gap_aff += (x(l) + ap * dxa(l)) * (z(l) + ad * dza(l));
    const double mu_aff = gap_aff / total_dim;
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // corrector
    Vec rhs = s.b - sigma * mu * aZi;
    for (size_t k = 0; k < K; ++k) {
      const Mat Cm = dXa[k] * dZa[k] * Zi[k];
      for (const auto& t : s.blocks[k].terms) rhs(t.var) += inner(t, Cm);
    }
    for (size_t l = 0; l < R; ++l)
      for (const auto& [k, a] : s.rows[l].a) rhs(k) += a * dxa(l) * dza(l) / z(l);
    dy = mllt.solve(rhs);
    std::vector<Mat> dX, dZ;
    Vec dx, dz;
    directions(dy, sigma * mu, &dXa, &dZa, &dxa, &dza, dX, dZ, dx, dz);
    steps(dX, dZ, dx, dz, ap, ad);
    const double frac = 0.95;
    ap = std::min(1.0, frac * ap);
    ad = std::min(1.0, frac * ad);

    for (size_t k = 0; k < K; ++k) X[k] = symmetrize(X[k] + ap * dX[k]);
    for (size_t l = 0; l < R; ++l) x(l) += ap * dx(l);
    Vec ynew = y + ad * dy;
    // guard against round-off pushing the dual slack out of the cone
    for (int back = 0; back < 30; ++back) {
      bool ok = true;
      for (size_t k = 0; k < K && ok; ++k) {
        Eigen::LLT<Mat> c(symmetrize(dual_slack(s.blocks[k], ynew)));
        ok = c.info() == Eigen::Success;
      }
      for (size_t l = 0; l < R && ok; ++l) ok = row_slack(s.rows[l], ynew) > 0;
      if (ok) break;
      ad *= 0.5;
      ynew = y + ad * dy;
    }
    y = ynew;
    res.iterations = it + 1;
  }
  res.y = y;
  return res;
}

StdForm base_form(const Program& prog, int nvar, int shift_var, double box) {
  StdForm s;
  s.nvar = nvar;
  s.b = Vec::Zero(nvar);
  for (const auto& b : prog.psd_blocks()) add_block(s, b.expr, shift_var);
  for (const auto& c : prog.linear_constraints()) add_block(s, c.expr, shift_var);
  for (int i = 0; i < prog.num_scalars(); ++i) {
    s.rows.push_back({box, {{i, 1.0}}});
    s.rows.push_back({box, {{i, -1.0}}});
  }
  return s;
}

}  // namespace

Solution InteriorPointBackend::solve(const Program& prog, const SolverOptions& o) const {
  const int n = prog.num_scalars();
  Solution sol;

  // feasibility phase: maximize t subject to every constraint shifted by t, t <= 1
  StdForm s1 = base_form(prog, n + 1, n, o.box);
  s1.rows.push_back({1.0, {{n, 1.0}}});
  s1.b(n) = 1.0;
  Vec y0 = Vec::Zero(n + 1);
  const Verification v0 = verify(prog, y0.head(n));
  y0(n) = std::min(0.0, v0.min_margin) - 1.0;
  IpmResult r1 = run_ipm(s1, y0, o, true, -o.feas_tol);
  Vec y = r1.y.head(n);
  sol.iterations = r1.iterations;
  sol.phase1_margin = r1.y(n);
  Verification v = verify(prog, y);

  if (v.min_margin < -o.feas_tol) {
    sol.status = (r1.infeasible || (r1.converged && r1.dobj < -o.feas_tol)) ? Status::Infeasible
                                                                            : Status::MaxIterations;
  } else {
    sol.status = Status::Feasible;
    if (prog.objective() && v.min_margin > 0) {
      StdForm s2 = base_form(prog, n, -1, o.box);
      for (const auto& [k, S] : prog.objective()->terms()) s2.b(k) = -S.coeff(0, 0);
      IpmResult r2 = run_ipm(s2, y, o, false, 0.0);
      sol.iterations += r2.iterations;
      const Verification v2 = verify(prog, r2.y);
      if (v2.min_margin >= -o.feas_tol) {
        y = r2.y;
        v = v2;
        if (!r2.converged) sol.status = Status::MaxIterations;
      }
    }
  }
  sol.y = y;
  sol.check = v;
  sol.min_eig_margin = v.min_margin;
  if (prog.objective()) sol.objective_value = prog.objective()->eval_scalar(y);
  for (const auto& var : prog.variables()) sol.assignments[var.name] = prog.value_of(var.name, y);
  return sol;
}

Solution solve(const Program& prog, const SolverOptions& opts, const Backend* backend) {
  static const InteriorPointBackend fallback;
  return (backend ? backend : &fallback)->solve(prog, opts);
}

}  // namespace probgain::sdp
