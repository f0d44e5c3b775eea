#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace probgain;
using probgain::testing::data_of;
using probgain::testing::exact_offline;
using probgain::testing::fixture;
using probgain::testing::learned_offline;
using probgain::testing::random_matrix;

namespace {

KernelModel integrator() {
  KernelModel k;
  k.Ry = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, -1.0)};
  k.Ru = {Mat::Constant(1, 1, -1.0), Mat::Zero(1, 1)};
  k.Rd = {Mat::Zero(1, 1), Mat::Zero(1, 1)};
  return k;
}

PlantHistory zero_history(int lag, int p, int m, int q) {
  PlantHistory h;
  for (int j = 0; j < lag; ++j) {
    h.y.push_back(Vec::Zero(p));
    h.u.push_back(Vec::Zero(m));
    h.d.push_back(Vec::Zero(q));
  }
  return h;
}

const ControllerDesign& general_design() {
  static const ControllerDesign d = [] {
    const SynthesisData sd = data_of(learned_offline());
    return *solve_design(build_theorem1(sd, 1.21, 1.21), sd, 0.5).design;
  }();
  return d;
}

const NoiseSources& mixture_noise() {
  static const NoiseSources s = mixture_sources(fixture().noise, 6, 5);
  return s;
}

ClosedLoopSetup general_setup() {
  const auto& o = learned_offline();
  return {fixture().kernel, o.basis, o.dyn, fixture().noise, general_design(), mixture_noise()};
}

Mat sample_cov(const Mat& X) {
  const Mat c = X.rowwise() - X.colwise().mean();
  return c.transpose() * c / double(X.rows() - 1);
}

RolloutRecord with_gamma(std::vector<double> g) {
  RolloutRecord r;
  r.T = static_cast<int>(g.size());
  r.steps = r.T;
  r.gamma = Eigen::Map<Vec>(g.data(), r.T);
  return r;
}

}  // namespace

TEST(StepPlant, ZeroStaysZero) {
  const auto& fx = fixture();
  const PlantHistory h = zero_history(fx.kernel.lag(), 2, 2, 2);
  EXPECT_EQ(step_plant(fx.kernel, h, Vec::Zero(2), Vec::Zero(2)).norm(), 0.0);
}

TEST(StepPlant, IntegratorIsExact) {
  Plant plant(integrator(), zero_history(1, 1, 1, 1));
  double y = 0;
  std::mt19937_64 rng(1);
  for (int k = 0; k < 50; ++k) {
    const Vec u = random_matrix(1, 1, rng);
    y += u(0);
    EXPECT_EQ(plant.step(u, Vec::Zero(1))(0), y);
  }
}

TEST(StepPlant, StepSatisfiesKernel) {
  const auto& fx = fixture();
  std::mt19937_64 rng(2);
  PlantHistory h;
  for (int j = 0; j < fx.kernel.lag(); ++j) {
    h.y.push_back(random_matrix(2, 1, rng));
    h.u.push_back(random_matrix(2, 1, rng));
    h.d.push_back(random_matrix(2, 1, rng));
  }
  const Vec u = random_matrix(2, 1, rng), d = random_matrix(2, 1, rng);
  const Vec y = step_plant(fx.kernel, h, u, d);
  const int l = fx.kernel.lag();
  Mat steps(l + 1, 6);
  for (int j = 0; j < l; ++j) steps.row(j) << h.y[j].transpose(), h.u[j].transpose(), h.d[j].transpose();
  steps.row(l) << y.transpose(), u.transpose(), d.transpose();
  EXPECT_LT(fx.kernel.residual(steps).norm(), 1e-10);
}

TEST(StepPlant, ShortHistory) {
  const auto& fx = fixture();
  try {
    step_plant(fx.kernel, zero_history(fx.kernel.lag() - 1, 2, 2, 2), Vec::Zero(2), Vec::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidHistory);
  }
}

TEST(StepPlant, BenchmarkIsOpenLoopUnstable) {
  const auto& fx = fixture();
  std::mt19937_64 rng(3);
  PlantHistory h = zero_history(fx.kernel.lag(), 2, 2, 2);
  for (auto& y : h.y) y = 1e-3 * random_matrix(2, 1, rng);
  Plant plant(fx.kernel, h);
  const double start = h.y.back().norm();
  double last = 0;
  for (int k = 0; k < 200; ++k) last = plant.step(Vec::Zero(2), Vec::Zero(2)).norm();
  EXPECT_GT(last, 1e3 * start);
}

TEST(Mixture, SingleComponentIsGaussian) {
  Mat C(2, 2);
  C << 0.4, 0.1, 0.1, 0.35;
  const Mat X = sample_mixture(gaussian_mixture(C), 100000, 3);
  EXPECT_LT((sample_cov(X) - C).norm() / C.norm(), 0.05);
}

TEST(Mixture, SymmetricPairHasZeroMean) {
  Mat I = Mat::Identity(2, 2);
  const Vec mu = Vec::Constant(2, 0.6);
  const MixtureSpec spec = make_mixture({{0.5, mu, 0.1 * I}, {0.5, -mu, 0.1 * I}}, I);
  spec.validate();
  const int n = 20000;
  const Mat X = sample_mixture(spec, n, 4);
  const Vec se = (sample_cov(X).diagonal() / n).cwiseSqrt();
  EXPECT_TRUE((X.colwise().mean().transpose().cwiseAbs().array() < 3.0 * se.array()).all());
}

TEST(Mixture, ConstructionMatchesTarget) {
  const Mat target = fixture().noise.S_n;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const MixtureSpec m = random_mixture(target, seed);
    EXPECT_NO_THROW(m.validate());
    EXPECT_LT(m.mixture_mean().norm(), 1e-10);
    EXPECT_LT((m.mixture_cov() - target).norm(), 1e-10);
    EXPECT_EQ(m.components.size(), 3u);
  }
  EXPECT_NE(random_mixture(target, 1).components[0].mean, random_mixture(target, 2).components[0].mean);
}

TEST(Mixture, SameSeedSameStream) {
  const MixtureSpec m = random_mixture(fixture().noise.S_d, 9);
  EXPECT_EQ(sample_mixture(m, 500, 42), sample_mixture(m, 500, 42));
  EXPECT_NE(sample_mixture(m, 500, 42), sample_mixture(m, 500, 43));
}

TEST(Dataset, DeterministicAndTooShort) {
  const auto& fx = fixture();
  DatasetOptions d;
  d.trajectories = 3;
  d.length = 40;
  d.seed = 5;
  const auto a = generate_dataset(fx.kernel, fx.layout, fx.noise.S_n, d);
  const auto b = generate_dataset(fx.kernel, fx.layout, fx.noise.S_n, d);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.trajectories[i], b.trajectories[i]);
  d.trajectories = 1;
  d.length = fx.layout.L;
  try {
    generate_dataset(fx.kernel, fx.layout, fx.noise.S_n, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotExciting);
  }
}

TEST(Forecast, Shapes) {
  const Vec db = Vec::Constant(2, 0.3);
  EXPECT_EQ(forecast_for(DesignMode::ConstantMean, 2, db)->at(17), db);
  EXPECT_EQ(forecast_for(DesignMode::ZeroMean, 2, db)->at(3).norm(), 0.0);
  const SinusoidStepForecast s(2);
  EXPECT_NEAR(s.at(10)(0), 1.0, 1e-12);
  EXPECT_NEAR(s.at(60)(0), std::sin(2 * M_PI * 60 / 40.0) + 0.5, 1e-12);
  const auto seq = forecast_sequence(s, 5);
  ASSERT_EQ(seq.size(), 5u);
  EXPECT_EQ(seq[0], s.at(1));
}

TEST(Controller, MeasureRequiresPlan) {
  const auto& o = learned_offline();
  OnlineController c(general_design(), o.basis, o.dyn, fixture().noise);
  EXPECT_THROW(c.plan(Vec::Zero(2)), Error);
  c.initialize(Vec::Zero(30));
  EXPECT_THROW(c.measure(Vec::Zero(6)), Error);
  EXPECT_NO_THROW(c.plan(Vec::Zero(2)));
}

TEST(Rollout, NoiseFreeZeroMeanStaysAtRest) {
  const auto& o = exact_offline();
  const NoiseModel quiet{Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Zero(6, 6)};
  const SynthesisData sd = data_of(o);
  const ControllerDesign des = *solve_design(build_zero_mean(sd, 1.5), sd, 0.0).design;
  const NoiseSources src = gaussian_sources(quiet, 6);
  const ClosedLoopSetup setup{fixture().kernel, o.basis, o.dyn, quiet, des, src};
  RolloutOptions ro;
  ro.T = 30;
  ro.initial_output_scale = 0.0;
  const RolloutRecord r = run_closed_loop(setup, ZeroForecast(2), ro);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.w_true.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(std::isnan(r.gamma_at(30)));
  try {
    gamma_cdf(std::vector<RolloutRecord>{r}, 30, gamma_grid());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCohort);
  }
}

TEST(Rollout, CertifiedDesignKeepsRolloutsBounded) {
  CampaignOptions co;
  co.cohort = 50;
  co.base_seed = 300;
  co.rollout.T = 100;
  const auto recs = run_campaign(general_setup(), SinusoidStepForecast(2), co);
  for (const auto& r : recs) {
    EXPECT_FALSE(r.diverged) << r.seed;
    EXPECT_LT(r.w_true.leftCols(2).cwiseAbs().maxCoeff(), 1e3);
  }
}

TEST(Rollout, BitIdenticalForSameSeed) {
  RolloutOptions ro;
  ro.T = 60;
  ro.seed = 77;
  const auto a = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  const auto b = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  EXPECT_EQ(a.w_true, b.w_true);
  EXPECT_EQ(a.w_meas, b.w_meas);
  EXPECT_EQ(a.g_post, b.g_post);
  EXPECT_EQ(a.trace_P, b.trace_P);
  ro.seed = 78;
  EXPECT_NE(run_closed_loop(general_setup(), SinusoidStepForecast(2), ro).w_true, a.w_true);
}

TEST(Rollout, CampaignOrderIndependentOfThreads) {
  CampaignOptions co;
  co.cohort = 12;
  co.rollout.T = 40;
  co.rollout.keep_signals = false;
  co.threads = 1;
  const auto a = run_campaign(general_setup(), SinusoidStepForecast(2), co);
  co.threads = 4;
  const auto b = run_campaign(general_setup(), SinusoidStepForecast(2), co);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(a[i].seed, co.base_seed + i);
    EXPECT_EQ(a[i].gamma, b[i].gamma);
  }
  co.cohort = 0;
  EXPECT_THROW(run_campaign(general_setup(), SinusoidStepForecast(2), co), Error);
}

TEST(Rollout, ControllerNeverReadsTrueSignals) {
  RolloutOptions ro;
  ro.T = 50;
  ro.seed = 5;
  const auto clean = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  int calls = 0;
  ro.true_signal_tap = [&](int, Vec& w) {
    ++calls;
    w.setConstant(std::numeric_limits<double>::quiet_NaN());
  };
  const auto tapped = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  EXPECT_EQ(calls, 50);
  EXPECT_TRUE(tapped.w_true.array().isNaN().all());
  EXPECT_EQ(tapped.u_bar, clean.u_bar);
  EXPECT_EQ(tapped.g_post, clean.g_post);
  EXPECT_EQ(tapped.w_meas, clean.w_meas);
}

TEST(Rollout, EnergyBookkeeping) {
  RolloutOptions ro;
  ro.T = 100;
  ro.seed = 6;
  const auto r = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  double sy = 0, sd = 0;
  for (int k = 0; k < r.steps; ++k) {
    sy += r.w_true.row(k).head(2).squaredNorm();
    sd += r.w_true.row(k).tail(2).squaredNorm();
    EXPECT_NEAR(r.sum_y2(k), sy, 1e-9 * sy);
    EXPECT_NEAR(r.sum_d2(k), sd, 1e-9 * sd);
    EXPECT_NEAR(r.gamma_at(k + 1), std::sqrt(sy / sd), 1e-9 * std::sqrt(sy / sd));
  }
}

TEST(Rollout, DivergenceIsRecorded) {
  RolloutOptions ro;
  ro.T = 40;
  ro.overflow_cap = 1e-3;
  const auto r = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.diverged_step, 1);
  EXPECT_TRUE(std::isinf(r.gamma_at(40)));
  EXPECT_TRUE(std::isnan(r.gamma_at(41)));
}

TEST(Cdf, Counting) {
  const std::vector<RolloutRecord> recs{with_gamma({1}), with_gamma({2}), with_gamma({3})};
  Vec grid(1);
  grid << 1.5;
  const CdfCurve c = gamma_cdf(recs, 1, grid);
  EXPECT_NEAR(c.cdf(0), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(c.count, 3);
}

TEST(Cdf, IdenticalRecordsGiveStep) {
  const std::vector<RolloutRecord> recs(4, with_gamma({2.0}));
  const Vec grid = gamma_grid(1, 3, 21);
  const CdfCurve c = gamma_cdf(recs, 1, grid);
  for (int i = 0; i < grid.size(); ++i) EXPECT_EQ(c.cdf(i), grid(i) >= 2.0 ? 1.0 : 0.0);
}

TEST(Cdf, DivergedCountsAsUnboundedAndEmptyThrows) {
  RolloutRecord d = with_gamma({1.0});
  d.diverged = true;
  d.steps = 0;
  d.T = 2;
  const CdfCurve c = gamma_cdf(std::vector<RolloutRecord>{d, with_gamma({1.0, 1.0})}, 2, gamma_grid());
  EXPECT_EQ(c.count, 2);
  EXPECT_EQ(c.cdf(c.cdf.size() - 1), 0.5);
  EXPECT_THROW(gamma_cdf(std::vector<double>{}, gamma_grid()), Error);
}

TEST(Bound, Examples) {
  const GainProfile p{0.81, 0.81, 0.4};
  Vec grid(3);
  grid << 0.9, 1e6, 2.0;
  const Vec b = bound_curve(p, grid);
  EXPECT_NEAR(b(0), 0.0, 1e-14);
  EXPECT_NEAR(b(1), 1.0, 1e-9);
  EXPECT_NEAR(b(2), 1 - 0.81 / 4, 1e-14);
  Vec g(1);
  g << 0.6 * std::sqrt(2.0);
  EXPECT_NEAR(bound_curve(GainProfile{5.0, 0.36, 0.0}, g)(0), 0.5, 1e-14);
  Vec low(1);
  low << 0.1;
  EXPECT_EQ(bound_curve(p, low)(0), 0.0);
}

TEST(BoundTests, InnerSlack) {
  const Vec grid = gamma_grid();
  const GainProfile p{1.21, 1.21, 0.5};
  const Vec b = bound_curve(p, grid);
  CdfCurve c{grid, (b.array() + 0.01).min(1.0).matrix(), 2000};
  EXPECT_TRUE(inner_test(c, b).pass);
  c.cdf(20) = b(20) - 0.001;  // well inside one standard error
  EXPECT_TRUE(inner_test(c, b).pass);
  c.cdf(30) = b(30) - 0.001;  // second point within the slack
  EXPECT_FALSE(inner_test(c, b).pass);
  c.cdf(30) = b(30) + 0.01;
  c.cdf(20) = b(20) - 0.2;
  const BoundTest t = inner_test(c, b);
  EXPECT_FALSE(t.pass);
  ASSERT_EQ(t.violations.size(), 1u);
  EXPECT_EQ(t.violations[0].gamma, grid(20));
  EXPECT_NEAR(t.min_difference, -0.2, 1e-12);
}

TEST(BoundTests, OuterPerCampaign) {
  const Vec grid = gamma_grid();
  const GainProfile p{1.21, 1.21, 0.5};
  const Vec b = bound_curve(p, grid);
  const CdfCurve above{grid, (b.array() + 0.01).matrix(), 2000};
  CdfCurve dip = above;
  dip.cdf(7) = b(7) - 0.005;
  const auto res = outer_test({above, dip, above}, p);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_TRUE(res[0].pass);
  EXPECT_FALSE(res[1].pass);
  ASSERT_EQ(res[1].violations.size(), 1u);
  EXPECT_EQ(res[1].violations[0].gamma, grid(7));
  EXPECT_TRUE(res[2].pass);
  EXPECT_THROW(outer_test({above}, p), Error);
}

TEST(BoundTests, SmallHorizonViolatesAndLongHorizonPasses) {
  CampaignOptions co;
  co.cohort = 2000;
  co.base_seed = 5000;
  co.rollout.T = 100;
  co.rollout.keep_signals = false;
  const ControllerDesign& d = general_design();
  GainProfile p = d.profile;
  p.rho = compute_rho(forecast_sequence(SinusoidStepForecast(2), 100), fixture().noise.S_d);
  const auto recs = run_campaign(general_setup(), SinusoidStepForecast(2), co);
  const Vec grid = gamma_grid();
  const Vec b = bound_curve(p, grid);
  EXPECT_FALSE(inner_test(gamma_cdf(recs, 5, grid), b).pass);
  EXPECT_TRUE(inner_test(gamma_cdf(recs, 100, grid), b).pass);
}

TEST(Export, NamesAndCdfRoundTrip) {
  EXPECT_EQ(export_name("cdf", 12, 100, DesignMode::General), "cdf_seed12_T100_general.txt");
  const Vec grid = gamma_grid();
  const CdfCurve c{grid, Vec::LinSpaced(51, 0, 1), 77};
  const Vec b = bound_curve(GainProfile{1, 1, 0}, grid);
  std::stringstream ss;
  write_cdf(ss, c, b, {"config_hash abc"});
  const CdfTable t = read_cdf(ss);
  EXPECT_EQ(t.count, 77);
  EXPECT_LT((t.cdf - c.cdf).norm(), 1e-15);
  EXPECT_LT((t.bound - b).norm(), 1e-15);
  EXPECT_EQ(t.header.front(), "config_hash abc");
  std::istringstream bad("gamma cdf\n1 0.5\n");
  EXPECT_THROW(read_cdf(bad), Error);
}

TEST(Export, RolloutColumns) {
  RolloutOptions ro;
  ro.T = 5;
  const auto r = run_closed_loop(general_setup(), SinusoidStepForecast(2), ro);
  std::ostringstream os;
  write_rollout(os, r, {"h"});
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("# h", 0), 0u);
  int rows = 0;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);)
    if (!line.empty() && line[0] != '#') ++rows;
  EXPECT_EQ(rows, 6);  // column header plus five steps
}
