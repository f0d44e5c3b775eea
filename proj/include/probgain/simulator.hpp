#pragma once

#include "probgain/synthesis.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace probgain {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------- plant

// Recent plant signals, most recent last.
struct PlantHistory {
  std::vector<Vec> y, u, d;
};

// y_k from the kernel recursion; needs at least lag() past steps of each signal
Vec step_plant(const KernelModel& model, const PlantHistory& history, const Vec& u_k,
               const Vec& d_k);

class Plant {
 public:
  Plant(KernelModel model, PlantHistory initial);
  Vec step(const Vec& u_k, const Vec& d_k);
  const PlantHistory& history() const { return hist_; }

 private:
  KernelModel model_;
  PlantHistory hist_;
};

// Two-output benchmark plant with its layout and noise levels.
struct BenchmarkFixture {
  KernelModel kernel;
  SignalLayout layout;
  NoiseModel noise;
};
BenchmarkFixture benchmark_fixture();

// ---------------------------------------------------------------- mixtures

struct MixtureComponent {
  double weight = 1;
  Vec mean;
  Mat cov;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;
  Mat target_cov;

  int dim() const { return static_cast<int>(target_cov.rows()); }
  void validate() const;
  Vec mixture_mean() const;
  Mat mixture_cov() const;
};

// Recentres the means and rescales the covariances so that the mixture has
// zero mean and covariance target_cov.
MixtureSpec make_mixture(std::vector<MixtureComponent> components, const Mat& target_cov);

MixtureSpec gaussian_mixture(const Mat& cov);

// Three components with random whitened means; between-component spread is
// half of the target covariance along its largest direction.
MixtureSpec random_mixture(const Mat& target_cov, std::uint64_t seed, int components = 3,
                           double spread = 0.5);

class MixtureSampler {
 public:
  explicit MixtureSampler(MixtureSpec spec);
  Vec draw(Rng& rng) const;
  const MixtureSpec& spec() const { return spec_; }

 private:
  MixtureSpec spec_;
  std::vector<Mat> roots_;
  std::vector<double> cumulative_;
};

// count x dim matrix of draws
Mat sample_mixture(const MixtureSpec& spec, int count, std::uint64_t seed);

// ---------------------------------------------------------------- data

struct DatasetOptions {
  int trajectories = 500;
  int length = 60;
  double excitation_std = 2.0;
  std::uint64_t seed = 1;
  int max_retries = 5;
};

// open-loop trajectories with white excitation on u and d, measured with
// Gaussian noise of covariance S_n
TrajectorySet generate_dataset(const KernelModel& model, const SignalLayout& layout,
                               const Mat& S_n, const DatasetOptions& opts);

// ---------------------------------------------------------------- forecasts

class MeanForecast {
 public:
  virtual ~MeanForecast() = default;
  virtual Vec at(int k) const = 0;
  virtual std::string name() const = 0;
};

// (sin(2 pi k / 40) + 0.5 [k >= 50], 0.8 cos(2 pi k / 25) - 0.5 [k >= 30]) for q = 2;
// other dimensions cycle through the two channel shapes
class SinusoidStepForecast : public MeanForecast {
 public:
  explicit SinusoidStepForecast(int q) : q_(q) {}
  Vec at(int k) const override;
  std::string name() const override { return "sinusoid-step"; }

 private:
  int q_;
};

class ConstantForecast : public MeanForecast {
 public:
  explicit ConstantForecast(Vec value) : v_(std::move(value)) {}
  Vec at(int) const override { return v_; }
  std::string name() const override { return "constant"; }

 private:
  Vec v_;
};

class ZeroForecast : public MeanForecast {
 public:
  explicit ZeroForecast(int q) : q_(q) {}
  Vec at(int) const override { return Vec::Zero(q_); }
  std::string name() const override { return "zero"; }

 private:
  int q_;
};

std::unique_ptr<MeanForecast> forecast_for(DesignMode mode, int q, const Vec& d_bar);

// mean forecast sequence over steps 1..T
std::vector<Vec> forecast_sequence(const MeanForecast& f, int T);

// ---------------------------------------------------------------- controller

// Online filter and control law. Only the forecast mean and measured window
// ever reach it.
class OnlineController {
 public:
  OnlineController(const ControllerDesign& design, const BehaviorBasis& basis,
                   const ParamDynamics& dyn, const NoiseModel& noise);

  // initializes from the first measured window (L+1 steps, oldest first)
  void initialize(const Vec& measured_window);
  // computes the prior for step k and returns the input to implement
  Vec plan(const Vec& d_mean);
  // filter update with the measured step w^m_k
  void measure(const Vec& w_measured);

  const Vec& g_prior() const { return g_prior_; }
  const Vec& g_post() const { return g_post_; }
  const Mat& P_post() const { return P_post_; }

 private:
  const ControllerDesign& design_;
  const BehaviorBasis& basis_;
  const ParamDynamics& dyn_;
  NoiseModel noise_;
  Mat H_, Hu_, Q_;
  Vec g_post_, g_prior_;
  Mat P_post_, P_prior_;
  bool initialized_ = false;
  bool planned_ = false;
};

// ---------------------------------------------------------------- rollouts

struct NoiseSources {
  MixtureSpec dd;  // disturbance deviation
  MixtureSpec du;  // input deviation
  MixtureSpec n;   // measurement noise
};

NoiseSources gaussian_sources(const NoiseModel& noise, int w_dim);
NoiseSources mixture_sources(const NoiseModel& noise, int w_dim, std::uint64_t seed);

struct RolloutOptions {
  int T = 100;
  std::uint64_t seed = 1;
  double overflow_cap = 1e9;
  double initial_output_scale = 4.0;
  bool keep_signals = true;
  // called on each true step before the controller runs; used to check
  // that the control path never reads it
  std::function<void(int k, Vec& w_true)> true_signal_tap;
};

struct RolloutRecord {
  std::uint64_t seed = 0;
  int T = 0;
  int steps = 0;  // completed steps
  bool diverged = false;
  int diverged_step = -1;
  // rows k = 1..steps (kept only with keep_signals)
  Mat w_true, w_meas, d_mean, u_bar, u, g_prior, g_post;
  Vec trace_P;
  // always kept
  Vec sum_y2, sum_d2, gamma;

  // NaN when the denominator is zero or the step was not reached; +inf after divergence
  double gamma_at(int T) const;
};

struct ClosedLoopSetup {
  const KernelModel& model;
  const BehaviorBasis& basis;
  const ParamDynamics& dyn;
  const NoiseModel& noise;
  const ControllerDesign& design;
  const NoiseSources& sources;
};

RolloutRecord run_closed_loop(const ClosedLoopSetup& setup, const MeanForecast& forecast,
                              const RolloutOptions& opts);

struct CampaignOptions {
  int cohort = 2000;
  std::uint64_t base_seed = 1;
  int threads = 0;  // 0: hardware concurrency
  RolloutOptions rollout;
};

// rollout i uses seed base_seed + i; records come back in seed order
std::vector<RolloutRecord> run_campaign(const ClosedLoopSetup& setup, const MeanForecast& forecast,
                                        const CampaignOptions& opts);

// ---------------------------------------------------------------- metrics

Vec gamma_grid(double lo = 1.0, double hi = 10.0, int points = 51);

// fraction of records with Gamma_T <= gamma; diverged rollouts count as
// unbounded, zero-energy ones are skipped
struct CdfCurve {
  Vec grid;
  Vec cdf;
  int count = 0;
};
CdfCurve gamma_cdf(const std::vector<RolloutRecord>& records, int T, const Vec& grid);
CdfCurve gamma_cdf(const std::vector<double>& gammas, const Vec& grid);

Vec bound_curve(const GainProfile& profile, const Vec& grid);

struct BoundViolation {
  double gamma;
  double cdf;
  double bound;
  double std_errors;  // (bound - cdf) / standard error
};

struct BoundTest {
  bool pass = false;
  std::vector<BoundViolation> violations;  // every grid point with cdf < bound
  double min_difference = 0;               // min(cdf - bound)
};

// passes when the CDF is above the bound everywhere except for at most
// `allowed` points that are within `se_slack` standard errors below it
BoundTest inner_test(const CdfCurve& cdf, const Vec& bound, double se_slack = 1.5,
                     int allowed = 1);

// one result per campaign, strict pointwise comparison
std::vector<BoundTest> outer_test(const std::vector<CdfCurve>& campaigns,
                                  const GainProfile& profile);

// ---------------------------------------------------------------- exports

std::string export_name(const std::string& kind, std::uint64_t seed, int T, DesignMode mode);
void write_rollout(std::ostream& os, const RolloutRecord& record,
                   const std::vector<std::string>& header_lines = {});
void write_cdf(std::ostream& os, const CdfCurve& cdf, const Vec& bound,
               const std::vector<std::string>& header_lines = {});

struct CdfTable {
  std::vector<std::string> header;
  Vec grid;
  Vec cdf;
  Vec bound;
  int count = 0;
};
CdfTable read_cdf(std::istream& is);

}  // namespace probgain
