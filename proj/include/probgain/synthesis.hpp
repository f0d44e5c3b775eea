#pragma once

#include "probgain/estimator.hpp"
#include "probgain/sdp.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace probgain {

enum class DesignMode { General, ConstantMean, ZeroMean };
const char* to_string(DesignMode mode);
DesignMode parse_mode(const std::string& s);

struct GainProfile {
  double gamma1_sq = 0;
  double gamma2_sq = 0;
  double rho = 0;

  void validate() const;
  // rho g1^2 + (1 - rho) g2^2
  double level() const { return rho * gamma1_sq + (1.0 - rho) * gamma2_sq; }
  // failure probability bound level / gamma^2
  double effective_bound(double gamma) const { return level() / (gamma * gamma); }
};

struct SynthesisOptions {
  double strict_margin = 1e-6;  // W >= strict_margin I stands in for W > 0
  double clamp_tol = kClampTol;
  double w_cond_cap = 1e10;
  double cert_tol = 1e-8;
  // An optimal design sits on the boundary of the feasible set. With free
  // gammas the returned design is re-solved at the optimum raised by this
  // relative amount, so that its certificates hold with margin.
  double objective_backoff = 1e-3;
  sdp::SolverOptions solver;
};

// A synthesis program together with what is needed to read its solution.
struct LmiProgram {
  DesignMode mode = DesignMode::General;
  sdp::Program prog;
  std::optional<double> gamma1_sq;  // fixed value, or decision variable when empty
  std::optional<double> gamma2_sq;
  Vec d_bar;        // constant-mean mode
  double rho = 0;   // weighting used by the optimization objective
};

// shared data of every synthesis program
struct SynthesisData {
  const ParamDynamics& dyn;
  const BehaviorBasis& basis;
  const SteadyState& ss;
  const NoiseModel& noise;
};

LmiProgram build_theorem1(const SynthesisData& data, std::optional<double> gamma1_sq,
                          std::optional<double> gamma2_sq, const SynthesisOptions& opts = {});

// with both gammas empty the program minimizes rho g1^2 + (1 - rho) g2^2
LmiProgram build_theorem2(const SynthesisData& data, const Vec& d_bar,
                          std::optional<double> gamma1_sq, std::optional<double> gamma2_sq,
                          const SynthesisOptions& opts = {});

LmiProgram build_zero_mean(const SynthesisData& data, double gamma2_sq,
                           const SynthesisOptions& opts = {});

struct ControllerDesign {
  DesignMode mode = DesignMode::General;
  Mat W, X, Y;
  Mat K_d;     // general mode
  Vec xi;      // constant-mean mode
  Vec d_bar;   // constant-mean mode
  Mat K_g;     // Y W^-1
  Mat A_cl;    // F_p + F_z K_g
  Mat B_cl;    // general: F_f + F_z K_d; constant-mean: F_f; zero-mean: empty
  Vec offset;  // constant-mean: F_z xi
  Mat M;       // W^-1
  Mat P_storage;
  GainProfile profile;
  double phi = 0;  // constant-mean offset term at the solution
  std::optional<double> objective;
  std::vector<std::pair<std::string, double>> block_margins;
  double storage_min_eig = 0;
  bool certified = false;

  // prior map g_{k|k-1} = A_cl g_{k-1|k-1} + forcing(E[d_k])
  Vec prior(const Vec& g_post, const Vec& d_mean) const;
  Vec z_hat(const Vec& g_post, const Vec& d_mean) const;
};

struct DesignResult {
  sdp::Status status = sdp::Status::MaxIterations;
  std::optional<ControllerDesign> design;
  sdp::Solution solution;
};

ControllerDesign assemble_controller(const sdp::Solution& sol, const LmiProgram& lmi,
                                     const SynthesisData& data, double rho,
                                     const SynthesisOptions& opts = {});

// objective holds the minimized level when the gammas are free; the returned
// design then carries the backed-off gammas
DesignResult solve_design(const LmiProgram& lmi, const SynthesisData& data, double rho,
                          const SynthesisOptions& opts = {});

// re-evaluates every block of the program at the design's matrices
std::vector<std::pair<std::string, double>> design_block_margins(const LmiProgram& lmi,
                                                                 const ControllerDesign& design);

double compute_rho(const Vec& d_bar, const Mat& S_d);
double compute_rho(const std::vector<Vec>& d_mean_seq, const Mat& S_d);

std::pair<double, double> corollary1_gammas(double gamma, double p);

// value of the pre-Schur dissipation inequality at (g, E[d]); >= 0 when certified
double nominal_dissipation(const ControllerDesign& design, const BehaviorBasis& basis,
                           const Vec& g, const Vec& d_mean);

// X - N^1/2 M N^1/2 - P^1/2 F'Pi_y'Pi_y F P^1/2, smallest eigenvalue
double offset_slack_min_eig(const ControllerDesign& design, const SynthesisData& data,
                            double clamp_tol = kClampTol);

struct ChanceBlock {
  double psi = 0;
  Vec coupling;  // F_p g + F_f E[d] + F_z z
  Mat block;     // [[psi, coupling'], [coupling, W]]
  double min_eig = 0;
  bool psd = false;
};

ChanceBlock chance_constraint_block(const ControllerDesign& design, const SynthesisData& data,
                                    const Vec& g_post_prev, const Vec& d_mean, double gamma,
                                    double p, const Vec& z_hat);

// same block with the virtual input left as an affine expression
sdp::Expr chance_constraint_expr(const ControllerDesign& design, const SynthesisData& data,
                                 const Vec& g_post_prev, const Vec& d_mean, double gamma,
                                 double p, const sdp::Expr& z_hat);

// a set of constant-mean designs switched by the forecast value
struct PiecewiseDesign {
  std::vector<ControllerDesign> designs;
  const ControllerDesign& select(const Vec& d_mean) const;
};

void write_design(std::ostream& os, const ControllerDesign& design,
                  const std::vector<std::string>& header_lines = {});
ControllerDesign read_design(std::istream& is);

}  // namespace probgain
