#include "probgain/synthesis.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace probgain {

using sdp::Expr;

const char* to_string(DesignMode mode) {
  switch (mode) {
    case DesignMode::General: return "general";
    case DesignMode::ConstantMean: return "constant";
    case DesignMode::ZeroMean: return "zero";
  }
  return "unknown";
}

DesignMode parse_mode(const std::string& s) {
  if (s == "general") return DesignMode::General;
  if (s == "constant") return DesignMode::ConstantMean;
  if (s == "zero") return DesignMode::ZeroMean;
  throw Error(ErrorKind::Usage, "unknown mode '" + s + "' (expected general|constant|zero)");
}

void GainProfile::validate() const {
  if (!(gamma1_sq >= 0 && gamma2_sq >= 0))
    throw Error(ErrorKind::InvalidInput, "gain profile: gammas must be nonnegative");
  if (!(rho >= 0 && rho <= 1)) throw Error(ErrorKind::InvalidInput, "gain profile: rho outside [0,1]");
}

namespace {

struct Common {
  Mat Nh;    // N^1/2
  Mat HyPh;  // Pi_y F P^1/2
  Mat Hy;    // Pi_y F
  int g, m, q, p;
};

Common common(const SynthesisData& d, const SynthesisOptions& opts) {
  Common c;
  c.Nh = psd_sqrt(d.ss.N_term, opts.clamp_tol);
  c.Hy = d.basis.PiF_y();
  c.HyPh = c.Hy * psd_sqrt(d.ss.P, opts.clamp_tol);
  c.g = d.basis.g_dim();
  c.m = d.basis.layout.m;
  c.q = d.basis.layout.q;
  c.p = d.basis.layout.p;
  return c;
}

Expr gamma_expr(sdp::Program& prog, const std::string& name, std::optional<double> v) {
  if (v) return Expr::scalar(*v);
  Expr e = prog.add_scalar(name);
  prog.add_nonnegative(name + "_nonneg", e);
  return e;
}

Expr zeros(int r, int c) { return Expr::zeros(r, c); }

void add_offset_block(sdp::Program& prog, const Common& c, const Expr& W, const Expr& X) {
  prog.add_psd("offset_block", Expr::symmetric_blocks({
                                   {X},
                                   {Expr::constant(c.Nh), W},
                                   {Expr::constant(c.HyPh), zeros(c.p, c.g), Expr::identity(c.p)},
                               }));
}

}  // namespace

LmiProgram build_theorem1(const SynthesisData& data, std::optional<double> gamma1_sq,
                          std::optional<double> gamma2_sq, const SynthesisOptions& opts) {
  const Common c = common(data, opts);
  LmiProgram out;
  out.mode = DesignMode::General;
  out.gamma1_sq = gamma1_sq;
  out.gamma2_sq = gamma2_sq;
  auto& prog = out.prog;
  const Expr W = prog.add_symmetric("W", c.g);
  const Expr X = prog.add_symmetric("X", c.g);
  const Expr Y = prog.add_matrix("Y", c.m, c.g);
  const Expr Kd = prog.add_matrix("K_d", c.m, c.q);
  const Expr g1 = gamma_expr(prog, "gamma1_sq", gamma1_sq);
  const Expr g2 = gamma_expr(prog, "gamma2_sq", gamma2_sq);
  const auto& dyn = data.dyn;

  prog.add_psd("W_pd", W - opts.strict_margin * Expr::identity(c.g));
  prog.add_nonnegative("offset_trace", data.noise.S_d.trace() * g2 - X.trace());
  add_offset_block(prog, c, W, X);
  prog.add_psd("dissipation",
               Expr::symmetric_blocks({
                   {W},
                   {zeros(c.q, c.g), Expr::scaled_identity(g1, c.q)},
                   {c.Hy * W, zeros(c.p, c.q), Expr::identity(c.p)},
                   {dyn.F_p * W + dyn.F_z * Y, Expr::constant(dyn.F_f) + dyn.F_z * Kd,
                    zeros(c.g, c.p), W},
               }));
  return out;
}

LmiProgram build_theorem2(const SynthesisData& data, const Vec& d_bar,
                          std::optional<double> gamma1_sq, std::optional<double> gamma2_sq,
                          const SynthesisOptions& opts) {
  const Common c = common(data, opts);
  if (d_bar.size() != c.q) throw Error(ErrorKind::InvalidInput, "theorem2: d_bar has wrong size");
  LmiProgram out;
  out.mode = DesignMode::ConstantMean;
  out.gamma1_sq = gamma1_sq;
  out.gamma2_sq = gamma2_sq;
  out.d_bar = d_bar;
  auto& prog = out.prog;
  const Expr W = prog.add_symmetric("W", c.g);
  const Expr X = prog.add_symmetric("X", c.g);
  const Expr Y = prog.add_matrix("Y", c.m, c.g);
  const Expr xi = prog.add_matrix("xi", c.m, 1);
  const Expr g1 = gamma_expr(prog, "gamma1_sq", gamma1_sq);
  const Expr g2 = gamma_expr(prog, "gamma2_sq", gamma2_sq);
  const auto& dyn = data.dyn;

  const Expr phi = d_bar.squaredNorm() * g1 + data.noise.S_d.trace() * g2 - X.trace();
  prog.add_psd("W_pd", W - opts.strict_margin * Expr::identity(c.g));
  add_offset_block(prog, c, W, X);
  prog.add_psd("dissipation",
               Expr::symmetric_blocks({
                   {phi},
                   {zeros(c.g, 1), W},
                   {zeros(c.p, 1), c.Hy * W, Expr::identity(c.p)},
                   {Expr::constant(dyn.F_f * d_bar) + dyn.F_z * xi, dyn.F_p * W + dyn.F_z * Y,
                    zeros(c.g, c.p), W},
               }));
  if (!gamma1_sq || !gamma2_sq) {
    out.rho = compute_rho(d_bar, data.noise.S_d);
    prog.minimize(out.rho * g1 + (1.0 - out.rho) * g2);
  }
  return out;
}

LmiProgram build_zero_mean(const SynthesisData& data, double gamma2_sq,
                           const SynthesisOptions& opts) {
  const Common c = common(data, opts);
  LmiProgram out;
  out.mode = DesignMode::ZeroMean;
  out.gamma2_sq = gamma2_sq;
  out.gamma1_sq = 0.0;
  auto& prog = out.prog;
  const Expr W = prog.add_symmetric("W", c.g);
  const Expr X = prog.add_symmetric("X", c.g);
  const Expr Y = prog.add_matrix("Y", c.m, c.g);
  const auto& dyn = data.dyn;

  prog.add_psd("W_pd", W - opts.strict_margin * Expr::identity(c.g));
  prog.add_nonnegative("offset_trace", Expr::scalar(data.noise.S_d.trace() * gamma2_sq) - X.trace());
  add_offset_block(prog, c, W, X);
  prog.add_psd("dissipation", Expr::symmetric_blocks({
                                  {W},
                                  {c.Hy * W, Expr::identity(c.p)},
                                  {dyn.F_p * W + dyn.F_z * Y, zeros(c.g, c.p), W},
                              }));
  return out;
}

Vec ControllerDesign::prior(const Vec& g_post, const Vec& d_mean) const {
  Vec g = A_cl * g_post;
  if (mode != DesignMode::ZeroMean) g += B_cl * d_mean;
  if (mode == DesignMode::ConstantMean) g += offset;
  return g;
}

Vec ControllerDesign::z_hat(const Vec& g_post, const Vec& d_mean) const {
  Vec z = K_g * g_post;
  if (mode == DesignMode::General) z += K_d * d_mean;
  if (mode == DesignMode::ConstantMean) z += xi;
  return z;
}

namespace {

std::map<std::string, Mat> design_values(const LmiProgram& lmi, const ControllerDesign& d) {
  std::map<std::string, Mat> v{{"W", d.W}, {"X", d.X}, {"Y", d.Y}};
  if (lmi.mode == DesignMode::General) v["K_d"] = d.K_d;
  if (lmi.mode == DesignMode::ConstantMean) v["xi"] = d.xi;
  if (!lmi.gamma1_sq) v["gamma1_sq"] = Mat::Constant(1, 1, d.profile.gamma1_sq);
  if (!lmi.gamma2_sq) v["gamma2_sq"] = Mat::Constant(1, 1, d.profile.gamma2_sq);
  return v;
}

}  // namespace

std::vector<std::pair<std::string, double>> design_block_margins(const LmiProgram& lmi,
                                                                 const ControllerDesign& design) {
  const Vec y = lmi.prog.point_from(design_values(lmi, design));
  const sdp::Verification v = sdp::verify(lmi.prog, y);
  std::vector<std::pair<std::string, double>> out;
  for (size_t i = 0; i < v.block_min_eigs.size(); ++i)
    out.emplace_back(lmi.prog.psd_blocks()[i].label, v.block_min_eigs[i]);
  for (size_t i = 0; i < v.linear_values.size(); ++i)
    out.emplace_back(lmi.prog.linear_constraints()[i].label, v.linear_values[i]);
  return out;
}

ControllerDesign assemble_controller(const sdp::Solution& sol, const LmiProgram& lmi,
                                     const SynthesisData& data, double rho,
                                     const SynthesisOptions& opts) {
  if (sol.status == sdp::Status::Infeasible)
    throw Error(ErrorKind::InvalidInput, "assemble_controller: solution is infeasible");
  const auto& dyn = data.dyn;
  ControllerDesign d;
  d.mode = lmi.mode;
  d.W = symmetrize(sol.assignments.at("W"));
  d.X = symmetrize(sol.assignments.at("X"));
  d.Y = sol.assignments.at("Y");
  d.M = spd_inverse(d.W, opts.w_cond_cap);
  d.K_g = d.Y * d.M;
  d.A_cl = dyn.F_p + dyn.F_z * d.K_g;
  d.profile.gamma1_sq = lmi.gamma1_sq ? *lmi.gamma1_sq : sol.assignments.at("gamma1_sq")(0, 0);
  d.profile.gamma2_sq = lmi.gamma2_sq ? *lmi.gamma2_sq : sol.assignments.at("gamma2_sq")(0, 0);
  d.profile.rho = rho;
  switch (lmi.mode) {
    case DesignMode::General:
      d.K_d = sol.assignments.at("K_d");
      d.B_cl = dyn.F_f + dyn.F_z * d.K_d;
      break;
    case DesignMode::ConstantMean:
      d.xi = sol.assignments.at("xi").col(0);
      d.d_bar = lmi.d_bar;
      d.B_cl = dyn.F_f;
      d.offset = dyn.F_z * d.xi;
      d.phi = d.profile.gamma1_sq * lmi.d_bar.squaredNorm() +
              d.profile.gamma2_sq * data.noise.S_d.trace() - d.X.trace();
      break;
    case DesignMode::ZeroMean:
      d.profile.gamma1_sq = 0;
      d.profile.rho = 0;
      break;
  }
  d.objective = sol.objective_value;
  const Mat Hy = data.basis.PiF_y();
  d.P_storage = symmetrize(d.M - Hy.transpose() * Hy);
  d.block_margins = design_block_margins(lmi, d);
  d.storage_min_eig = min_eig(d.P_storage);
  d.certified = d.storage_min_eig >= -opts.cert_tol;
  for (const auto& [name, v] : d.block_margins) d.certified = d.certified && v >= -opts.cert_tol;
  return d;
}

DesignResult solve_design(const LmiProgram& lmi, const SynthesisData& data, double rho,
                          const SynthesisOptions& opts) {
  DesignResult r;
  r.solution = sdp::solve(lmi.prog, opts.solver);
  r.status = r.solution.status;
  if (r.status == sdp::Status::Feasible ||
      (r.status == sdp::Status::MaxIterations && r.solution.min_eig_margin >= -opts.solver.feas_tol)) {
    r.design = assemble_controller(r.solution, lmi, data, rho, opts);
  }
  const bool free_gammas = !lmi.gamma1_sq || !lmi.gamma2_sq;
  if (!r.design || !free_gammas || !(opts.objective_backoff > 0) || lmi.mode == DesignMode::ZeroMean) return r;

  // raise both gammas by the same amount; the weighted level grows by backoff * level
  const GainProfile opt = r.design->profile;
  const double bump = opts.objective_backoff * std::max(opt.level(), opts.cert_tol);
  const double g1 = opt.gamma1_sq + bump, g2 = opt.gamma2_sq + bump;
  const LmiProgram fixed = lmi.mode == DesignMode::ConstantMean
                               ? build_theorem2(data, lmi.d_bar, g1, g2, opts)
                               : build_theorem1(data, g1, g2, opts);
  const sdp::Solution sol = sdp::solve(fixed.prog, opts.solver);
  if (sol.status != sdp::Status::Feasible) return r;
  const std::optional<double> level = r.design->objective;
  r.design = assemble_controller(sol, fixed, data, rho, opts);
  r.design->objective = level;
  r.solution = sol;
  return r;
}

double compute_rho(const Vec& d_bar, const Mat& S_d) {
  const double e = d_bar.squaredNorm();
  const double denom = S_d.trace() + e;
  if (!(denom > 0)) throw Error(ErrorKind::UndefinedRho, "rho undefined: zero mean energy and trace");
  return e / denom;
}

double compute_rho(const std::vector<Vec>& seq, const Mat& S_d) {
  if (seq.empty()) throw Error(ErrorKind::UndefinedRho, "rho undefined: empty mean sequence");
  double e = 0;
  for (const auto& d : seq) {
    if (!d.allFinite()) throw Error(ErrorKind::InvalidInput, "rho: non-finite mean disturbance");
    e += d.squaredNorm();
  }
  e /= static_cast<double>(seq.size());
  const double denom = S_d.trace() + e;
  if (!(denom > 0)) throw Error(ErrorKind::UndefinedRho, "rho undefined: zero mean energy and trace");
  return e / denom;
}

std::pair<double, double> corollary1_gammas(double gamma, double p) {
  if (!(gamma > 0) || !(p > 0 && p <= 1))
    throw Error(ErrorKind::InvalidInput, "corollary1_gammas: need gamma > 0 and p in (0,1]");
  const double v = p * gamma * gamma;
  return {v, v};
}

double nominal_dissipation(const ControllerDesign& d, const BehaviorBasis& basis, const Vec& g,
                           const Vec& d_mean) {
  const Vec next = d.prior(g, d_mean);
  double v = g.dot(d.P_storage * g) - next.dot(d.M * next);
  switch (d.mode) {
    case DesignMode::General: v += d.profile.gamma1_sq * d_mean.squaredNorm(); break;
    case DesignMode::ConstantMean: v += d.phi; break;
    case DesignMode::ZeroMean: break;
  }
  (void)basis;
  return v;
}

double offset_slack_min_eig(const ControllerDesign& design, const SynthesisData& data,
                            double clamp_tol) {
  const Mat Nh = psd_sqrt(data.ss.N_term, clamp_tol);
  const Mat Ph = psd_sqrt(data.ss.P, clamp_tol);
  const Mat Hy = data.basis.PiF_y();
  const Mat rhs = Nh * design.M * Nh + Ph * Hy.transpose() * Hy * Ph;
  return min_eig(symmetrize(design.X - rhs));
}

namespace {

double chance_psi(const ControllerDesign& d, const SynthesisData& data, const Vec& g,
                  const Vec& d_mean, double gamma, double p) {
  const Mat Hy = data.basis.PiF_y();
  const Mat FtF = Hy.transpose() * Hy;
  return g.dot(d.P_storage * g) +
         p * gamma * gamma * (d_mean.squaredNorm() + data.noise.S_d.trace()) -
         (d.M * data.ss.N_term + FtF * data.ss.P).trace();
}

}  // namespace

ChanceBlock chance_constraint_block(const ControllerDesign& d, const SynthesisData& data,
                                    const Vec& g, const Vec& d_mean, double gamma, double p,
                                    const Vec& z_hat) {
  ChanceBlock b;
  const auto& dyn = data.dyn;
  b.psi = chance_psi(d, data, g, d_mean, gamma, p);
  b.coupling = dyn.F_p * g + dyn.F_f * d_mean + dyn.F_z * z_hat;
  const int n = static_cast<int>(d.W.rows());
  b.block = Mat::Zero(n + 1, n + 1);
  b.block(0, 0) = b.psi;
  b.block.block(1, 0, n, 1) = b.coupling;
  b.block.block(0, 1, 1, n) = b.coupling.transpose();
  b.block.bottomRightCorner(n, n) = d.W;
  b.min_eig = min_eig(b.block);
  const double scale = std::max(1.0, b.block.cwiseAbs().maxCoeff());
  b.psd = b.min_eig >= -1e-10 * scale;
  return b;
}

sdp::Expr chance_constraint_expr(const ControllerDesign& d, const SynthesisData& data,
                                 const Vec& g, const Vec& d_mean, double gamma, double p,
                                 const sdp::Expr& z_hat) {
  const auto& dyn = data.dyn;
  const double psi = chance_psi(d, data, g, d_mean, gamma, p);
  const Expr coupling = Expr::constant(dyn.F_p * g + dyn.F_f * d_mean) + dyn.F_z * z_hat;
  return Expr::symmetric_blocks({{Expr::scalar(psi)}, {coupling, Expr::constant(d.W)}});
}

const ControllerDesign& PiecewiseDesign::select(const Vec& d_mean) const {
  if (designs.empty()) throw Error(ErrorKind::InvalidInput, "piecewise design: empty table");
  size_t best = 0;
  double dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < designs.size(); ++i) {
    const double e = (designs[i].d_bar - d_mean).norm();
    if (e < dist) {
      dist = e;
      best = i;
    }
  }
  return designs[best];
}

// ------------------------------------------------------------ artifact I/O

namespace {

void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17e", v);
  os << buf;
}

void put_matrix(std::ostream& os, const std::string& name, const Mat& A) {
  os << "matrix " << name << " " << A.rows() << " " << A.cols() << "\n";
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    for (Eigen::Index c = 0; c < A.cols(); ++c) {
      if (c) os << " ";
      put(os, A(r, c));
    }
    os << "\n";
  }
}

}  // namespace

void write_design(std::ostream& os, const ControllerDesign& d,
                  const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) os << "# " << h << "\n";
  os << "design-artifact 1\n";
  os << "mode " << to_string(d.mode) << "\n";
  os << "gamma1_sq ";
  put(os, d.profile.gamma1_sq);
  os << "\ngamma2_sq ";
  put(os, d.profile.gamma2_sq);
  os << "\nrho ";
  put(os, d.profile.rho);
  os << "\nphi ";
  put(os, d.phi);
  os << "\nobjective ";
  if (d.objective)
    put(os, *d.objective);
  else
    os << "none";
  os << "\nstorage_min_eig ";
  put(os, d.storage_min_eig);
  os << "\ncertified " << (d.certified ? 1 : 0) << "\n";
  os << "margins " << d.block_margins.size() << "\n";
  for (const auto& [name, v] : d.block_margins) {
    os << name << " ";
    put(os, v);
    os << "\n";
  }
  put_matrix(os, "W", d.W);
  put_matrix(os, "X", d.X);
  put_matrix(os, "Y", d.Y);
  put_matrix(os, "K_d", d.K_d);
  put_matrix(os, "xi", d.xi);
  put_matrix(os, "d_bar", d.d_bar);
  put_matrix(os, "K_g", d.K_g);
  put_matrix(os, "A_cl", d.A_cl);
  put_matrix(os, "B_cl", d.B_cl);
  put_matrix(os, "offset", d.offset);
  put_matrix(os, "M", d.M);
  put_matrix(os, "P_storage", d.P_storage);
  os << "end\n";
}

ControllerDesign read_design(std::istream& is) {
  ControllerDesign d;
  std::string line, key;
  auto fail = [](const std::string& what) -> void {
    throw Error(ErrorKind::Schema, "design artifact: " + what);
  };
  auto next = [&]() -> std::string {
    while (std::getline(is, line)) {
      if (!line.empty() && line[0] == '#') continue;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      return line;
    }
    fail("unexpected end of file");
    return {};
  };
  auto number = [&](const std::string& tok) {
    try {
      size_t pos = 0;
      const double v = std::stod(tok, &pos);
      if (pos != tok.size()) fail("bad number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + tok + "'");
    }
    return 0.0;
  };
  auto keyed = [&](const std::string& expect) {
    std::istringstream ls(next());
    std::string k, v;
    ls >> k >> v;
    if (k != expect) fail("expected '" + expect + "', found '" + k + "'");
    return v;
  };
  if (keyed("design-artifact") != "1") fail("unsupported version");
  try {
    d.mode = parse_mode(keyed("mode"));
  } catch (const Error&) {
    fail("unknown mode");
  }
  d.profile.gamma1_sq = number(keyed("gamma1_sq"));
  d.profile.gamma2_sq = number(keyed("gamma2_sq"));
  d.profile.rho = number(keyed("rho"));
  d.phi = number(keyed("phi"));
  const std::string obj = keyed("objective");
  if (obj != "none") d.objective = number(obj);
  d.storage_min_eig = number(keyed("storage_min_eig"));
  d.certified = keyed("certified") == "1";
  const int nm = static_cast<int>(number(keyed("margins")));
  for (int i = 0; i < nm; ++i) {
    std::istringstream ls(next());
    std::string name, v;
    ls >> name >> v;
    d.block_margins.emplace_back(name, number(v));
  }
  auto matrix = [&](const std::string& expect) {
    std::istringstream ls(next());
    std::string tag, name;
    long r = -1, c = -1;
    ls >> tag >> name >> r >> c;
    if (tag != "matrix" || name != expect || r < 0 || c < 0) fail("expected matrix " + expect);
    Mat A(r, c);
    for (long i = 0; i < r; ++i) {
      std::istringstream rs(next());
      std::string tok;
      for (long j = 0; j < c; ++j) {
        if (!(rs >> tok)) fail("short row in matrix " + expect);
        A(i, j) = number(tok);
      }
    }
    return A;
  };
  d.W = matrix("W");
  d.X = matrix("X");
  d.Y = matrix("Y");
  d.K_d = matrix("K_d");
  d.xi = matrix("xi");
  d.d_bar = matrix("d_bar");
  d.K_g = matrix("K_g");
  d.A_cl = matrix("A_cl");
  d.B_cl = matrix("B_cl");
  d.offset = matrix("offset");
  d.M = matrix("M");
  d.P_storage = matrix("P_storage");
  if (next().rfind("end", 0) != 0) fail("missing end marker");
  return d;
}

}  // namespace probgain
