#include "probgain/behavior.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>

namespace probgain {

void SignalLayout::validate() const {
  if (p < 1 || m < 1 || q < 1) throw Error(ErrorKind::InvalidInput, "layout: p, m, q must be >= 1");
  if (L < 1) throw Error(ErrorKind::InvalidInput, "layout: L must be >= 1");
  if (n_state < 0) throw Error(ErrorKind::InvalidInput, "layout: n_state must be >= 0");
}

bool operator==(const SignalLayout& a, const SignalLayout& b) {
  return a.p == b.p && a.m == b.m && a.q == b.q && a.L == b.L && a.n_state == b.n_state;
}

Mat SignalLayout::Pi_p() const {
  const int w = w_dim();
  Mat S = Mat::Zero(L * w, (L + 1) * w);
  S.rightCols(L * w).setIdentity();
  return S;
}

Mat SignalLayout::Pi_f() const {
  const int w = w_dim();
  Mat S = Mat::Zero(w, (L + 1) * w);
  S.rightCols(w).setIdentity();
  return S;
}

namespace {

Mat last_step_selector(const SignalLayout& l, int offset, int dim) {
  Mat S = Mat::Zero(dim, l.window_rows());
  S.block(0, l.L * l.w_dim() + offset, dim, dim).setIdentity();
  return S;
}

}  // namespace

Mat SignalLayout::Pi_y() const { return last_step_selector(*this, 0, p); }
Mat SignalLayout::Pi_u() const { return last_step_selector(*this, p, m); }
Mat SignalLayout::Pi_d() const { return last_step_selector(*this, p + m, q); }

void TrajectorySet::validate() const {
  layout.validate();
  if (trajectories.empty()) throw Error(ErrorKind::InvalidInput, "trajectory set is empty");
  const auto T1 = trajectories[0].rows();
  for (size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    if (t.rows() != T1)
      throw Error(ErrorKind::InvalidInput,
                  "trajectory " + std::to_string(i) + " has a different length", double(i));
    if (t.cols() != layout.w_dim())
      throw Error(ErrorKind::InvalidInput,
                  "trajectory " + std::to_string(i) + " has the wrong channel count", double(i));
    require_finite(t, "trajectory " + std::to_string(i));
  }
}

void KernelModel::validate() const {
  if (Ry.empty() || Ry.size() != Ru.size() || Ry.size() != Rd.size())
    throw Error(ErrorKind::InvalidInput, "kernel: coefficient lists must share one lag");
  const auto pp = Ry[0].rows();
  for (size_t j = 0; j < Ry.size(); ++j) {
    if (Ry[j].rows() != pp || Ry[j].cols() != pp || Ru[j].rows() != pp || Rd[j].rows() != pp ||
        Ru[j].cols() != Ru[0].cols() || Rd[j].cols() != Rd[0].cols())
      throw Error(ErrorKind::InvalidInput, "kernel: inconsistent coefficient shapes");
  }
  Eigen::FullPivLU<Mat> lu(Ry[0]);
  if (!lu.isInvertible())
    throw Error(ErrorKind::InvalidInput, "kernel: lag-0 output coefficient is singular");
}

Vec KernelModel::residual(const Mat& steps) const {
  const int l = lag();
  const int k = static_cast<int>(steps.rows()) - 1;
  if (k < l) throw Error(ErrorKind::InvalidHistory, "kernel residual: window shorter than lag");
  const int pp = p(), mm = m(), qq = q();
  Vec r = Vec::Zero(pp);
  for (int j = 0; j <= l; ++j) {
    const auto row = steps.row(k - j).transpose();
    r += Ry[j] * row.segment(0, pp) + Ru[j] * row.segment(pp, mm) + Rd[j] * row.segment(pp + mm, qq);
  }
  return r;
}

Vec window_at(const Trajectory& traj, int first, int depth) {
  const int w = static_cast<int>(traj.cols());
  Vec v(depth * w);
  for (int s = 0; s < depth; ++s) v.segment(s * w, w) = traj.row(first + s).transpose();
  return v;
}

Mat hankel(const Trajectory& traj, int depth) {
  const int steps = static_cast<int>(traj.rows());
  if (depth < 1 || depth > steps)
    throw Error(ErrorKind::InvalidDepth,
                "hankel: depth " + std::to_string(depth) + " exceeds trajectory length " +
                    std::to_string(steps),
                depth);
  const int w = static_cast<int>(traj.cols());
  const int cols = steps - depth + 1;
  Mat H(depth * w, cols);
  for (int j = 0; j < cols; ++j) H.col(j) = window_at(traj, j, depth);
  return H;
}

bool is_persistently_exciting(const Mat& input_traj, int order, double rank_tol) {
  const int channels = static_cast<int>(input_traj.cols());
  const Mat H = hankel(input_traj, order);
  if (H.cols() < H.rows()) return false;
  if (H.cwiseAbs().maxCoeff() == 0.0) return false;
  return numerical_rank(H, rank_tol) == order * channels;
}

Mat compensated_gram(const TrajectorySet& data, const Mat& S_n, int depth) {
  const int w = data.layout.w_dim();
  Mat M = Mat::Zero(depth * w, depth * w);
  for (const auto& t : data.trajectories) {
    const Mat H = hankel(t, depth);
    M.selfadjointView<Eigen::Lower>().rankUpdate(H);
  }
  M = M.selfadjointView<Eigen::Lower>();
  const double N = static_cast<double>(data.trajectories.size());
  const int cols = data.steps() - depth + 1;
  M /= N;
  M -= double(cols) * kron(Mat::Identity(depth, depth), S_n);
  return symmetrize(M);
}

BehaviorBasis learn_basis(const TrajectorySet& data, const Mat& S_n, const SignalLayout& layout_in,
                          const LearnOptions& opts) {
  SignalLayout layout = layout_in;
  layout.validate();
  if (!(data.layout.p == layout.p && data.layout.m == layout.m && data.layout.q == layout.q))
    throw Error(ErrorKind::InvalidInput, "learn_basis: dataset channels do not match the layout");
  data.validate();
  const int w = layout.w_dim();
  if (S_n.rows() != w || S_n.cols() != w)
    throw Error(ErrorKind::InvalidInput, "learn_basis: S_n must be w_dim x w_dim");
  if (min_eig(S_n) < -kClampTol) throw Error(ErrorKind::NotPsd, "learn_basis: S_n is not PSD");

  const int depth = layout.L + 1;
  const Mat M = compensated_gram(data, S_n, depth);
  const SymEig es = sym_eig(M);

  if (opts.auto_n_state) {
    // largest relative gap between consecutive eigenvalues over admissible cuts
    const int base = depth * layout.free_dim();
    const int max_n = layout.L * layout.p;
    double best = -1.0;
    int best_n = 0;
    for (int n = 0; n <= max_n && base + n < es.values.size(); ++n) {
      const double hi = es.values(base + n - 1);
      const double lo = std::max(std::abs(es.values(base + n)), 1e-300);
      const double ratio = hi / lo;
      if (ratio > best) {
        best = ratio;
        best_n = n;
      }
    }
    layout.n_state = best_n;
  }

  const int g = layout.g_dim();
  if (g > M.rows())
    throw Error(ErrorKind::InconsistentLayout, "learn_basis: g_dim exceeds window dimension");

  if (opts.check_excitation) {
    const int order = layout.L + layout.n_state + 1;
    for (size_t i = 0; i < data.trajectories.size(); ++i) {
      const Mat inputs = data.trajectories[i].rightCols(layout.free_dim());
      bool ok = inputs.rows() >= order;
      if (ok) ok = is_persistently_exciting(inputs, order, opts.rank_tol);
      if (!ok)
        throw Error(ErrorKind::NotExciting,
                    "learn_basis: inputs of trajectory " + std::to_string(i) +
                        " are not persistently exciting of order " + std::to_string(order),
                    double(i));
    }
  }

  BehaviorBasis out;
  out.layout = layout;
  out.spectrum = es.values;
  out.F = orthonormalize(es.vectors.leftCols(g));
  if (g < es.values.size()) {
    const double lo = es.values(g);
    out.spectral_gap = lo > 0 ? es.values(g - 1) / lo : std::numeric_limits<double>::infinity();
    out.gap_warning = out.spectral_gap < opts.gap_tol;
  } else {
    out.spectral_gap = std::numeric_limits<double>::infinity();
  }
  return out;
}

BehaviorBasis exact_basis_from_kernel(const KernelModel& kernel, const SignalLayout& layout) {
  kernel.validate();
  layout.validate();
  if (kernel.p() != layout.p || kernel.m() != layout.m || kernel.q() != layout.q)
    throw Error(ErrorKind::InconsistentLayout, "kernel channel counts do not match the layout");
  const int l = kernel.lag();
  if (l > layout.L) throw Error(ErrorKind::InconsistentLayout, "kernel lag exceeds L");
  const int w = layout.w_dim(), p = layout.p, m = layout.m, q = layout.q;
  const int rows = (layout.L + 1 - l) * p;
  Mat C = Mat::Zero(rows, layout.window_rows());
  for (int t = l; t <= layout.L; ++t) {
    const int r = (t - l) * p;
    for (int j = 0; j <= l; ++j) {
      const int c = (t - j) * w;
      C.block(r, c, p, p) += kernel.Ry[j];
      C.block(r, c + p, p, m) += kernel.Ru[j];
      C.block(r, c + p + m, p, q) += kernel.Rd[j];
    }
  }
  Mat N = null_space(C, 1e-10);
  if (N.cols() != layout.g_dim())
    throw Error(ErrorKind::InconsistentLayout,
                "kernel null space has dimension " + std::to_string(N.cols()) + ", layout expects " +
                    std::to_string(layout.g_dim()),
                double(N.cols()));
  BehaviorBasis out;
  out.layout = layout;
  out.F = N;
  out.spectral_gap = std::numeric_limits<double>::infinity();
  return out;
}

Vec state_map(const BehaviorBasis& basis, const Vec& window) {
  if (window.size() != basis.F.rows())
    throw Error(ErrorKind::InvalidInput, "state_map: window has the wrong length");
  return basis.F.transpose() * window;
}

void write_dataset(std::ostream& os, const TrajectorySet& data,
                   const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) os << "# " << h << "\n";
  const auto& l = data.layout;
  std::vector<std::string> names;
  for (int i = 1; i <= l.p; ++i) names.push_back("y" + std::to_string(i));
  for (int i = 1; i <= l.m; ++i) names.push_back("u" + std::to_string(i));
  for (int i = 1; i <= l.q; ++i) names.push_back("d" + std::to_string(i));
  for (size_t i = 0; i < names.size(); ++i) os << (i ? " " : "") << names[i];
  os << "\n";
  char buf[64];
  for (size_t k = 0; k < data.trajectories.size(); ++k) {
    if (k) os << "\n";
    const auto& t = data.trajectories[k];
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
        os << (c ? " " : "") << buf;
      }
      os << "\n";
    }
  }
}

TrajectorySet read_dataset(std::istream& is) {
  TrajectorySet out;
  std::string line;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  int ncols = 0;
  auto flush = [&]() {
    if (rows.empty()) return;
    Mat t(rows.size(), ncols);
    for (size_t r = 0; r < rows.size(); ++r)
      for (int c = 0; c < ncols; ++c) t(r, c) = rows[r][c];
    out.trajectories.push_back(std::move(t));
    rows.clear();
  };
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '#') continue;
    const bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (blank) {
      flush();
      continue;
    }
    std::istringstream ls(line);
    if (!have_header) {
      std::string tok;
      int p = 0, m = 0, q = 0;
      while (ls >> tok) {
        const char kind = tok[0];
        const int expect = 1 + (kind == 'y' ? p : kind == 'u' ? m : q);
        if ((kind != 'y' && kind != 'u' && kind != 'd') || tok.substr(1) != std::to_string(expect))
          throw Error(ErrorKind::Schema, "dataset header: unexpected channel name '" + tok + "'");
        if (kind == 'y') {
          if (m || q) throw Error(ErrorKind::Schema, "dataset header: channel order must be y,u,d");
          ++p;
        } else if (kind == 'u') {
          if (q) throw Error(ErrorKind::Schema, "dataset header: channel order must be y,u,d");
          ++m;
        } else {
          ++q;
        }
      }
      out.layout.p = p;
      out.layout.m = m;
      out.layout.q = q;
      ncols = p + m + q;
      have_header = true;
      continue;
    }
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof() || static_cast<int>(vals.size()) != ncols)
      throw Error(ErrorKind::Schema, "dataset line " + std::to_string(lineno) +
                                         ": expected " + std::to_string(ncols) + " numbers");
    rows.push_back(std::move(vals));
  }
  flush();
  if (!have_header) throw Error(ErrorKind::Schema, "dataset: missing channel header");
  if (out.trajectories.empty()) throw Error(ErrorKind::Schema, "dataset: no trajectories");
  for (size_t i = 1; i < out.trajectories.size(); ++i)
    if (out.trajectories[i].rows() != out.trajectories[0].rows())
      throw Error(ErrorKind::Schema,
                  "dataset: trajectory " + std::to_string(i) + " has a different length");
  return out;
}

void write_basis(std::ostream& os, const BehaviorBasis& basis,
                 const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) os << "# " << h << "\n";
  const auto& l = basis.layout;
  char buf[64];
  os << "basis " << l.p << " " << l.m << " " << l.q << " " << l.L << " " << l.n_state << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", basis.spectral_gap);
  os << "gap " << buf << "\n";
  os << "F " << basis.F.rows() << " " << basis.F.cols() << "\n";
  for (Eigen::Index r = 0; r < basis.F.rows(); ++r) {
    for (Eigen::Index c = 0; c < basis.F.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", basis.F(r, c));
      os << (c ? " " : "") << buf;
    }
    os << "\n";
  }
}

BehaviorBasis read_basis(std::istream& is) {
  std::string line;
  auto next = [&]() -> std::istringstream {
    while (std::getline(is, line))
      if (!line.empty() && line[0] != '#') return std::istringstream(line);
    throw Error(ErrorKind::Schema, "basis file: unexpected end of file");
  };
  BehaviorBasis b;
  std::string tag;
  {
    auto ls = next();
    auto& l = b.layout;
    if (!(ls >> tag >> l.p >> l.m >> l.q >> l.L >> l.n_state) || tag != "basis")
      throw Error(ErrorKind::Schema, "basis file: bad layout line");
  }
  {
    auto ls = next();
    std::string v;
    if (!(ls >> tag >> v) || tag != "gap") throw Error(ErrorKind::Schema, "basis file: bad gap line");
    b.spectral_gap = std::stod(v);
  }
  long rows = 0, cols = 0;
  {
    auto ls = next();
    if (!(ls >> tag >> rows >> cols) || tag != "F")
      throw Error(ErrorKind::Schema, "basis file: bad matrix line");
  }
  if (rows != b.layout.window_rows() || cols != b.layout.g_dim())
    throw Error(ErrorKind::Schema, "basis file: matrix shape does not match the layout");
  b.F.resize(rows, cols);
  for (long r = 0; r < rows; ++r) {
    auto ls = next();
    for (long c = 0; c < cols; ++c)
      if (!(ls >> b.F(r, c))) throw Error(ErrorKind::Schema, "basis file: short row");
  }
  return b;
}

}  // namespace probgain
