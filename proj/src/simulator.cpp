#include "probgain/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

namespace probgain {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// independent stream for (seed, tag, index)
Rng substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
  return Rng(splitmix(splitmix(seed ^ splitmix(tag)) + index));
}

Vec standard_normal(Rng& rng, int n) {
  std::normal_distribution<double> nd;
  Vec z(n);
  for (int i = 0; i < n; ++i) z(i) = nd(rng);
  return z;
}

void push_bounded(std::vector<Vec>& v, const Vec& x, size_t keep) {
  v.push_back(x);
  if (v.size() > keep) v.erase(v.begin(), v.begin() + static_cast<long>(v.size() - keep));
}

}  // namespace

// ---------------------------------------------------------------- plant

Vec step_plant(const KernelModel& model, const PlantHistory& h, const Vec& u_k, const Vec& d_k) {
  const int lag = model.lag();
  if (static_cast<int>(h.y.size()) < lag || static_cast<int>(h.u.size()) < lag ||
      static_cast<int>(h.d.size()) < lag)
    throw Error(ErrorKind::InvalidHistory,
                "step_plant: history shorter than the lag " + std::to_string(lag), lag);
  if (u_k.size() != model.m() || d_k.size() != model.q())
    throw Error(ErrorKind::InvalidInput, "step_plant: input sizes do not match the model");
  Vec rhs = model.Ru[0] * u_k + model.Rd[0] * d_k;
  for (int j = 1; j <= lag; ++j) {
    const size_t back = static_cast<size_t>(j);
    rhs += model.Ry[j] * h.y[h.y.size() - back] + model.Ru[j] * h.u[h.u.size() - back] +
           model.Rd[j] * h.d[h.d.size() - back];
  }
  return -model.Ry[0].partialPivLu().solve(rhs);
}

Plant::Plant(KernelModel model, PlantHistory initial)
    : model_(std::move(model)), hist_(std::move(initial)) {
  model_.validate();
}

Vec Plant::step(const Vec& u_k, const Vec& d_k) {
  const Vec y = step_plant(model_, hist_, u_k, d_k);
  const size_t keep = static_cast<size_t>(std::max(1, model_.lag()));
  push_bounded(hist_.y, y, keep);
  push_bounded(hist_.u, u_k, keep);
  push_bounded(hist_.d, d_k, keep);
  return y;
}

BenchmarkFixture benchmark_fixture() {
  auto m2 = [](double a, double b, double c, double d) {
    Mat M(2, 2);
    M << a, b, c, d;
    return M;
  };
  BenchmarkFixture f;
  f.kernel.Ry = {m2(4.29, -1.43, -1.43, 2.14), m2(-4.5, 1.5, -1.57, 2.36)};
  f.kernel.Ru = {m2(-1.11, -1.4, -1.47, -1.45), m2(-0.65, 0.42, 0.024, -0.17)};
  f.kernel.Rd = {m2(-0.15, -0.12, -0.11, -0.16), Mat::Zero(2, 2)};
  f.layout = SignalLayout{2, 2, 2, 4, 2};
  f.noise.S_d = Eigen::Vector2d(0.4, 0.35).asDiagonal();
  f.noise.S_u = Eigen::Vector2d(0.2, 0.1).asDiagonal();
  Vec sn(6);
  sn << 0.6, 0.2, 0.1, 0.5, 0.5, 0.3;
  f.noise.S_n = sn.asDiagonal();
  return f;
}

// ---------------------------------------------------------------- mixtures

Vec MixtureSpec::mixture_mean() const {
  Vec m = Vec::Zero(dim());
  for (const auto& c : components) m += c.weight * c.mean;
  return m;
}

Mat MixtureSpec::mixture_cov() const {
  const Vec mu = mixture_mean();
  Mat C = Mat::Zero(dim(), dim());
  for (const auto& c : components) C += c.weight * (c.cov + (c.mean - mu) * (c.mean - mu).transpose());
  return C;
}

void MixtureSpec::validate() const {
  if (components.empty()) throw Error(ErrorKind::InvalidInput, "mixture: no components");
  const int n = dim();
  double wsum = 0;
  for (const auto& c : components) {
    if (!(c.weight > 0)) throw Error(ErrorKind::InvalidInput, "mixture: weights must be positive");
    if (c.mean.size() != n || c.cov.rows() != n || c.cov.cols() != n)
      throw Error(ErrorKind::InvalidInput, "mixture: component dimension mismatch");
    if (min_eig(c.cov) < -kClampTol) throw Error(ErrorKind::NotPsd, "mixture: component covariance");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12) throw Error(ErrorKind::InvalidInput, "mixture: weights do not sum to 1");
  const double scale = std::max(1.0, target_cov.cwiseAbs().maxCoeff());
  if (mixture_mean().cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorKind::InvalidInput, "mixture: mean is not zero");
  if ((mixture_cov() - target_cov).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorKind::InvalidInput, "mixture: covariance does not match the target");
}

MixtureSpec make_mixture(std::vector<MixtureComponent> comps, const Mat& target_cov) {
  if (comps.empty()) throw Error(ErrorKind::InvalidInput, "mixture: no components");
  double wsum = 0;
  for (const auto& c : comps) {
    if (!(c.weight > 0)) throw Error(ErrorKind::InvalidInput, "mixture: weights must be positive");
    wsum += c.weight;
  }
  MixtureSpec s;
  s.target_cov = symmetrize(target_cov);
  const int n = s.dim();
  for (auto& c : comps) {
    if (c.mean.size() != n || c.cov.rows() != n || c.cov.cols() != n)
      throw Error(ErrorKind::InvalidInput, "mixture: component dimension mismatch");
    c.weight /= wsum;
  }
  s.components = std::move(comps);
  const Vec mu = s.mixture_mean();
  for (auto& c : s.components) c.mean -= mu;
  // S total S' = target with S = target^1/2 total^-1/2
  const Mat total = s.mixture_cov();
  const SymEig es = sym_eig(total);
  Vec inv_root = Vec::Zero(n);
  const double tol = 1e-12 * std::max(1.0, es.values.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i)
    if (es.values(i) > tol) inv_root(i) = 1.0 / std::sqrt(es.values(i));
  const Mat S =
      psd_sqrt(s.target_cov) * es.vectors * inv_root.asDiagonal() * es.vectors.transpose();
  for (auto& c : s.components) {
    c.mean = S * c.mean;
    c.cov = symmetrize(S * c.cov * S.transpose());
  }
  s.validate();
  return s;
}

MixtureSpec gaussian_mixture(const Mat& cov) {
  MixtureSpec s;
  s.target_cov = symmetrize(cov);
  s.components.push_back({1.0, Vec::Zero(cov.rows()), s.target_cov});
  s.validate();
  return s;
}

MixtureSpec random_mixture(const Mat& target_cov, std::uint64_t seed, int k, double spread) {
  if (k < 1 || !(spread >= 0 && spread < 1))
    throw Error(ErrorKind::InvalidInput, "random_mixture: need k >= 1 and spread in [0,1)");
  const int n = static_cast<int>(target_cov.rows());
  Rng rng = substream(seed, 0x6d6978);
  std::uniform_real_distribution<double> uw(0.2, 1.0);
  std::vector<double> w(k);
  std::vector<Vec> a(k);
  double wsum = 0;
  for (int i = 0; i < k; ++i) {
    w[i] = uw(rng);
    wsum += w[i];
    a[i] = standard_normal(rng, n);
  }
  Vec abar = Vec::Zero(n);
  for (int i = 0; i < k; ++i) {
    w[i] /= wsum;
    abar += w[i] * a[i];
  }
  Mat B = Mat::Zero(n, n);
  for (int i = 0; i < k; ++i) {
    a[i] -= abar;
    B += w[i] * a[i] * a[i].transpose();
  }
  const double top = max_eig(B);
  const double scale = top > 0 ? std::sqrt(spread / top) : 0.0;
  B *= scale * scale;
  const Mat Lr = psd_sqrt(symmetrize(target_cov));
  const Mat within = symmetrize(Lr * (Mat::Identity(n, n) - B) * Lr);
  MixtureSpec s;
  s.target_cov = symmetrize(target_cov);
  for (int i = 0; i < k; ++i) s.components.push_back({w[i], Lr * (scale * a[i]), within});
  // re-centre exactly; the spread is unchanged
  const Vec mu = s.mixture_mean();
  for (auto& c : s.components) c.mean -= mu;
  s.validate();
  return s;
}

MixtureSampler::MixtureSampler(MixtureSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  double acc = 0;
  for (const auto& c : spec_.components) {
    roots_.push_back(psd_sqrt(c.cov, 1e-6));
    acc += c.weight;
    cumulative_.push_back(acc);
  }
  cumulative_.back() = 1.0;
}

Vec MixtureSampler::draw(Rng& rng) const {
  size_t i = 0;
  if (cumulative_.size() > 1) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    while (i + 1 < cumulative_.size() && u >= cumulative_[i]) ++i;
  }
  const auto& c = spec_.components[i];
  return c.mean + roots_[i] * standard_normal(rng, spec_.dim());
}

Mat sample_mixture(const MixtureSpec& spec, int count, std::uint64_t seed) {
  if (count < 0) throw Error(ErrorKind::InvalidInput, "sample_mixture: negative count");
  const MixtureSampler sampler(spec);
  Rng rng = substream(seed, 0x73616d70);
  Mat out(count, spec.dim());
  for (int i = 0; i < count; ++i) out.row(i) = sampler.draw(rng).transpose();
  return out;
}

// ---------------------------------------------------------------- data

TrajectorySet generate_dataset(const KernelModel& model, const SignalLayout& layout,
                               const Mat& S_n, const DatasetOptions& opts) {
  layout.validate();
  model.validate();
  if (model.p() != layout.p || model.m() != layout.m || model.q() != layout.q)
    throw Error(ErrorKind::InvalidInput, "generate_dataset: model does not match the layout");
  if (opts.trajectories < 1) throw Error(ErrorKind::InvalidInput, "generate_dataset: no trajectories");
  const int w = layout.w_dim();
  if (S_n.rows() != w || S_n.cols() != w)
    throw Error(ErrorKind::InvalidInput, "generate_dataset: S_n must be w_dim x w_dim");
  const int order = layout.L + layout.n_state + 1;
  if (opts.length < order || opts.length - order + 1 < order * layout.free_dim())
    throw Error(ErrorKind::NotExciting,
                "generate_dataset: length " + std::to_string(opts.length) +
                    " is too short for excitation of order " + std::to_string(order),
                opts.length);
  const Mat noise_root = psd_sqrt(S_n, 1e-6);
  const double a = opts.excitation_std;
  const int lag = model.lag();

  TrajectorySet set;
  set.layout = layout;
  for (int i = 0; i < opts.trajectories; ++i) {
    bool done = false;
    for (int attempt = 0; attempt <= opts.max_retries && !done; ++attempt) {
      Rng rng = substream(opts.seed, 0x64617461 + static_cast<std::uint64_t>(attempt),
                          static_cast<std::uint64_t>(i));
      PlantHistory h;
      for (int j = 0; j < lag; ++j) {
        h.y.push_back(a * standard_normal(rng, layout.p));
        h.u.push_back(Vec::Zero(layout.m));
        h.d.push_back(Vec::Zero(layout.q));
      }
      Plant plant(model, h);
      Mat traj(opts.length, w);
      for (int k = 0; k < opts.length; ++k) {
        const Vec u = a * standard_normal(rng, layout.m);
        const Vec d = a * standard_normal(rng, layout.q);
        const Vec y = plant.step(u, d);
        traj.row(k) << y.transpose(), u.transpose(), d.transpose();
      }
      if (!is_persistently_exciting(traj.rightCols(layout.free_dim()), order)) continue;
      for (int k = 0; k < opts.length; ++k)
        traj.row(k) += (noise_root * standard_normal(rng, w)).transpose();
      set.trajectories.push_back(std::move(traj));
      done = true;
    }
    if (!done)
      throw Error(ErrorKind::NotExciting,
                  "generate_dataset: trajectory " + std::to_string(i) +
                      " failed the excitation check after retries",
                  i);
  }
  return set;
}

// ---------------------------------------------------------------- forecasts

Vec SinusoidStepForecast::at(int k) const {
  constexpr double pi = 3.14159265358979323846;
  Vec v(q_);
  for (int i = 0; i < q_; ++i) {
    if (i % 2 == 0)
      v(i) = std::sin(2 * pi * k / 40.0) + (k >= 50 ? 0.5 : 0.0);
    else
      v(i) = 0.8 * std::cos(2 * pi * k / 25.0) - (k >= 30 ? 0.5 : 0.0);
  }
  return v;
}

std::unique_ptr<MeanForecast> forecast_for(DesignMode mode, int q, const Vec& d_bar) {
  switch (mode) {
    case DesignMode::General: return std::make_unique<SinusoidStepForecast>(q);
    case DesignMode::ConstantMean:
      if (d_bar.size() != q) throw Error(ErrorKind::InvalidInput, "forecast: d_bar has wrong size");
      return std::make_unique<ConstantForecast>(d_bar);
    case DesignMode::ZeroMean: return std::make_unique<ZeroForecast>(q);
  }
  throw Error(ErrorKind::InvalidInput, "forecast: unknown mode");
}

std::vector<Vec> forecast_sequence(const MeanForecast& f, int T) {
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(std::max(T, 0)));
  for (int k = 1; k <= T; ++k) out.push_back(f.at(k));
  return out;
}

// ---------------------------------------------------------------- controller

OnlineController::OnlineController(const ControllerDesign& design, const BehaviorBasis& basis,
                                   const ParamDynamics& dyn, const NoiseModel& noise)
    : design_(design), basis_(basis), dyn_(dyn), noise_(noise.regularized(nullptr)) {
  H_ = basis.PiF_f();
  Hu_ = basis.PiF_u();
  Q_ = process_covariance(dyn, noise_);
}

void OnlineController::initialize(const Vec& measured_window) {
  const auto& l = basis_.layout;
  if (measured_window.size() != l.window_rows())
    throw Error(ErrorKind::InvalidInput, "controller: initial window has the wrong size");
  g_post_ = state_map(basis_, measured_window);
  const Mat Sw = kron(Mat::Identity(l.L + 1, l.L + 1), noise_.S_n);
  P_post_ = symmetrize(basis_.F.transpose() * Sw * basis_.F);
  initialized_ = true;
  planned_ = false;
}

Vec OnlineController::plan(const Vec& d_mean) {
  if (!initialized_) throw Error(ErrorKind::InvalidInput, "controller: not initialized");
  g_prior_ = design_.prior(g_post_, d_mean);
  P_prior_ = symmetrize(dyn_.E_p * P_post_ * dyn_.E_p.transpose() + Q_);
  planned_ = true;
  return Hu_ * g_prior_;
}

void OnlineController::measure(const Vec& w_measured) {
  if (!planned_) throw Error(ErrorKind::InvalidInput, "controller: measure before plan");
  const GainUpdate gu = gain_and_update(H_, P_prior_, noise_.S_n);
  g_post_ = g_prior_ + gu.K * (w_measured - H_ * g_prior_);
  P_post_ = gu.P_post;
  planned_ = false;
}

// ---------------------------------------------------------------- rollouts

NoiseSources gaussian_sources(const NoiseModel& noise, int w_dim) {
  if (noise.S_n.rows() != w_dim) throw Error(ErrorKind::InvalidInput, "noise sources: S_n size");
  return {gaussian_mixture(noise.S_d), gaussian_mixture(noise.S_u), gaussian_mixture(noise.S_n)};
}

NoiseSources mixture_sources(const NoiseModel& noise, int w_dim, std::uint64_t seed) {
  if (noise.S_n.rows() != w_dim) throw Error(ErrorKind::InvalidInput, "noise sources: S_n size");
  return {random_mixture(noise.S_d, splitmix(seed) ^ 1), random_mixture(noise.S_u, splitmix(seed) ^ 2),
          random_mixture(noise.S_n, splitmix(seed) ^ 3)};
}

double RolloutRecord::gamma_at(int k) const {
  if (k < 1 || k > T) return std::numeric_limits<double>::quiet_NaN();
  if (diverged && k > steps) return std::numeric_limits<double>::infinity();
  if (k > steps) return std::numeric_limits<double>::quiet_NaN();
  return gamma(k - 1);
}

RolloutRecord run_closed_loop(const ClosedLoopSetup& s, const MeanForecast& forecast,
                              const RolloutOptions& opts) {
  const auto& l = s.basis.layout;
  if (opts.T < 1) throw Error(ErrorKind::InvalidInput, "run_closed_loop: horizon must be positive");
  if (s.model.p() != l.p || s.model.m() != l.m || s.model.q() != l.q)
    throw Error(ErrorKind::InvalidInput, "run_closed_loop: model and basis layouts differ");
  if (s.design.A_cl.rows() != s.basis.g_dim())
    throw Error(ErrorKind::InvalidInput, "run_closed_loop: design and basis dimensions differ");
  const int w = l.w_dim(), g = s.basis.g_dim(), T = opts.T;
  const MixtureSampler sd(s.sources.dd), su(s.sources.du), sn(s.sources.n);

  Rng rng = substream(opts.seed, 0x726f6c6c);
  RolloutRecord rec;
  rec.seed = opts.seed;
  rec.T = T;
  rec.sum_y2 = Vec::Zero(T);
  rec.sum_d2 = Vec::Zero(T);
  rec.gamma = Vec::Constant(T, std::numeric_limits<double>::quiet_NaN());
  if (opts.keep_signals) {
    rec.w_true = Mat::Zero(T, w);
    rec.w_meas = Mat::Zero(T, w);
    rec.d_mean = Mat::Zero(T, l.q);
    rec.u_bar = Mat::Zero(T, l.m);
    rec.u = Mat::Zero(T, l.m);
    rec.g_prior = Mat::Zero(T, g);
    rec.g_post = Mat::Zero(T, g);
    rec.trace_P = Vec::Zero(T);
  }

  PlantHistory h0;
  for (int j = 0; j < std::max(1, s.model.lag()); ++j) {
    h0.y.push_back(opts.initial_output_scale * standard_normal(rng, l.p));
    h0.u.push_back(Vec::Zero(l.m));
    h0.d.push_back(Vec::Zero(l.q));
  }
  Plant plant(s.model, h0);

  // open-loop warmup over steps -L..0 fills the first window
  const double dither = std::sqrt(std::max(0.0, s.noise.S_u.trace()));
  Vec window(l.window_rows());
  for (int j = 0; j <= l.L; ++j) {
    const int k = j - l.L;
    const Vec u = dither * standard_normal(rng, l.m);
    const Vec d = forecast.at(k) + sd.draw(rng);
    const Vec y = plant.step(u, d);
    Vec wk(w);
    wk << y, u, d;
    window.segment(j * w, w) = wk + sn.draw(rng);
  }
  OnlineController ctrl(s.design, s.basis, s.dyn, s.noise);
  ctrl.initialize(window);

  double sy = 0, sdd = 0;
  for (int k = 1; k <= T; ++k) {
    const Vec d_mean = forecast.at(k);
    const Vec d = d_mean + sd.draw(rng);
    const Vec u_bar = ctrl.plan(d_mean);
    const Vec u = u_bar + su.draw(rng);
    const Vec y = plant.step(u, d);
    if (!y.allFinite() || y.norm() > opts.overflow_cap) {
      rec.diverged = true;
      rec.diverged_step = k;
      break;
    }
    Vec w_true(w);
    w_true << y, u, d;
    const Vec w_meas = w_true + sn.draw(rng);
    const int r = k - 1;
    sy += y.squaredNorm();
    sdd += d.squaredNorm();
    rec.sum_y2(r) = sy;
    rec.sum_d2(r) = sdd;
    if (sdd > 0) rec.gamma(r) = std::sqrt(sy / sdd);
    if (opts.true_signal_tap) opts.true_signal_tap(k, w_true);
    if (opts.keep_signals) {
      rec.w_true.row(r) = w_true.transpose();
      rec.w_meas.row(r) = w_meas.transpose();
      rec.d_mean.row(r) = d_mean.transpose();
      rec.u_bar.row(r) = u_bar.transpose();
      rec.u.row(r) = u.transpose();
      rec.g_prior.row(r) = ctrl.g_prior().transpose();
    }
    ctrl.measure(w_meas);
    if (opts.keep_signals) {
      rec.g_post.row(r) = ctrl.g_post().transpose();
      rec.trace_P(r) = ctrl.P_post().trace();
    }
    rec.steps = k;
  }
  if (rec.diverged && opts.keep_signals) {
    const int n = rec.steps;
    rec.w_true.conservativeResize(n, Eigen::NoChange);
    rec.w_meas.conservativeResize(n, Eigen::NoChange);
    rec.d_mean.conservativeResize(n, Eigen::NoChange);
    rec.u_bar.conservativeResize(n, Eigen::NoChange);
    rec.u.conservativeResize(n, Eigen::NoChange);
    rec.g_prior.conservativeResize(n, Eigen::NoChange);
    rec.g_post.conservativeResize(n, Eigen::NoChange);
    rec.trace_P.conservativeResize(n);
  }
  return rec;
}

std::vector<RolloutRecord> run_campaign(const ClosedLoopSetup& setup, const MeanForecast& forecast,
                                        const CampaignOptions& opts) {
  if (opts.cohort < 1) throw Error(ErrorKind::Usage, "campaign: cohort must be positive");
  std::vector<RolloutRecord> out(static_cast<size_t>(opts.cohort));
  int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, opts.cohort);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
  auto work = [&](int tid) {
    try {
      for (int i = next++; i < opts.cohort; i = next++) {
        RolloutOptions ro = opts.rollout;
        ro.seed = opts.base_seed + static_cast<std::uint64_t>(i);
        out[static_cast<size_t>(i)] = run_closed_loop(setup, forecast, ro);
      }
    } catch (...) {
      errors[static_cast<size_t>(tid)] = std::current_exception();
      next = opts.cohort;
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------- metrics

Vec gamma_grid(double lo, double hi, int points) {
  if (points < 2 || !(hi > lo)) throw Error(ErrorKind::InvalidInput, "gamma_grid: bad range");
  return Vec::LinSpaced(points, lo, hi);
}

CdfCurve gamma_cdf(const std::vector<double>& gammas, const Vec& grid) {
  CdfCurve c;
  c.grid = grid;
  std::vector<double> v;
  for (double x : gammas)
    if (!std::isnan(x)) v.push_back(x);
  if (v.empty()) throw Error(ErrorKind::EmptyCohort, "gamma_cdf: no record with a defined gain");
  std::sort(v.begin(), v.end());
  c.count = static_cast<int>(v.size());
  c.cdf.resize(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const auto it = std::upper_bound(v.begin(), v.end(), grid(i));
    c.cdf(i) = double(it - v.begin()) / double(v.size());
  }
  return c;
}

CdfCurve gamma_cdf(const std::vector<RolloutRecord>& records, int T, const Vec& grid) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.gamma_at(T));
  return gamma_cdf(v, grid);
}

Vec bound_curve(const GainProfile& profile, const Vec& grid) {
  profile.validate();
  Vec b(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    b(i) = std::max(0.0, 1.0 - profile.level() / (grid(i) * grid(i)));
  return b;
}

BoundTest inner_test(const CdfCurve& c, const Vec& bound, double se_slack, int allowed) {
  if (bound.size() != c.cdf.size()) throw Error(ErrorKind::InvalidInput, "inner_test: size mismatch");
  BoundTest t;
  t.min_difference = std::numeric_limits<double>::infinity();
  int within = 0;
  bool beyond = false;
  const double n = std::max(1, c.count);
  for (Eigen::Index i = 0; i < bound.size(); ++i) {
    const double diff = c.cdf(i) - bound(i);
    t.min_difference = std::min(t.min_difference, diff);
    if (diff >= 0) continue;
    const double b = bound(i);
    const double se = std::sqrt(std::max(b * (1 - b), 1.0 / n) / n);
    const double k = -diff / se;
    t.violations.push_back({c.grid(i), c.cdf(i), b, k});
    if (k <= se_slack)
      ++within;
    else
      beyond = true;
  }
  t.pass = !beyond && within <= allowed;
  return t;
}

std::vector<BoundTest> outer_test(const std::vector<CdfCurve>& campaigns, const GainProfile& profile) {
  if (campaigns.size() < 2) throw Error(ErrorKind::InvalidInput, "outer_test: needs at least two campaigns");
  std::vector<BoundTest> out;
  for (const auto& c : campaigns) out.push_back(inner_test(c, bound_curve(profile, c.grid), 0.0, 0));
  return out;
}

// ---------------------------------------------------------------- exports

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string export_name(const std::string& kind, std::uint64_t seed, int T, DesignMode mode) {
  return kind + "_seed" + std::to_string(seed) + "_T" + std::to_string(T) + "_" + to_string(mode) +
         ".txt";
}

void write_rollout(std::ostream& os, const RolloutRecord& r, const std::vector<std::string>& header) {
  for (const auto& h : header) os << "# " << h << "\n";
  os << "# seed " << r.seed << " T " << r.T << " steps " << r.steps << " diverged "
     << (r.diverged ? 1 : 0) << "\n";
  const bool sig = r.w_true.rows() == r.steps && r.steps > 0;
  const int w = sig ? static_cast<int>(r.w_true.cols()) : 0;
  const int m = sig ? static_cast<int>(r.u.cols()) : 0;
  const int q = sig ? static_cast<int>(r.d_mean.cols()) : 0;
  os << "k";
  for (int i = 0; i < w; ++i) os << " w" << i + 1;
  for (int i = 0; i < w; ++i) os << " wm" << i + 1;
  for (int i = 0; i < q; ++i) os << " Ed" << i + 1;
  for (int i = 0; i < m; ++i) os << " ubar" << i + 1;
  for (int i = 0; i < m; ++i) os << " u" << i + 1;
  if (sig) os << " traceP";
  os << " sum_y2 sum_d2 gamma\n";
  for (int k = 0; k < r.steps; ++k) {
    os << k + 1;
    if (sig) {
      for (int i = 0; i < w; ++i) os << " " << num(r.w_true(k, i));
      for (int i = 0; i < w; ++i) os << " " << num(r.w_meas(k, i));
      for (int i = 0; i < q; ++i) os << " " << num(r.d_mean(k, i));
      for (int i = 0; i < m; ++i) os << " " << num(r.u_bar(k, i));
      for (int i = 0; i < m; ++i) os << " " << num(r.u(k, i));
      os << " " << num(r.trace_P(k));
    }
    os << " " << num(r.sum_y2(k)) << " " << num(r.sum_d2(k)) << " " << num(r.gamma(k)) << "\n";
  }
}

void write_cdf(std::ostream& os, const CdfCurve& c, const Vec& bound,
               const std::vector<std::string>& header) {
  if (bound.size() != c.grid.size()) throw Error(ErrorKind::InvalidInput, "write_cdf: size mismatch");
  for (const auto& h : header) os << "# " << h << "\n";
  os << "# count " << c.count << "\n";
  os << "gamma cdf bound\n";
  for (Eigen::Index i = 0; i < c.grid.size(); ++i)
    os << num(c.grid(i)) << " " << num(c.cdf(i)) << " " << num(bound(i)) << "\n";
}

CdfTable read_cdf(std::istream& is) {
  CdfTable t;
  std::string line;
  bool columns = false;
  std::vector<double> g, c, b;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.size() > 2 ? line.substr(2) : "";
      if (body.rfind("count ", 0) == 0)
        t.count = std::stoi(body.substr(6));
      else
        t.header.push_back(body);
      continue;
    }
    if (!columns) {
      if (line != "gamma cdf bound") throw Error(ErrorKind::Schema, "cdf file: unexpected column header");
      columns = true;
      continue;
    }
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw Error(ErrorKind::Schema, "cdf file: malformed row '" + line + "'");
    g.push_back(x);
    c.push_back(y);
    b.push_back(z);
  }
  if (!columns) throw Error(ErrorKind::Schema, "cdf file: missing column header");
  t.grid = Eigen::Map<Vec>(g.data(), static_cast<Eigen::Index>(g.size()));
  t.cdf = Eigen::Map<Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
  t.bound = Eigen::Map<Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
  return t;
}

}  // namespace probgain
