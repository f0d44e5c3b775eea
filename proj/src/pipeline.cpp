#include "probgain/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace probgain {

namespace fs = std::filesystem;

int exit_code_for(const Error& e) {
  return (e.kind() == ErrorKind::Schema || e.kind() == ErrorKind::Usage) ? kExitSchema : kExitFailure;
}

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what(), e.value());
  }
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::Schema, "cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::Usage, "cannot write " + p.string());
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path input_path(const std::optional<std::string>& given, const std::string& out,
                    const char* fallback) {
  return given ? fs::path(*given) : fs::path(out) / fallback;
}

std::pair<std::optional<double>, std::optional<double>> resolve_gammas(const RunConfig& cfg) {
  switch (cfg.gamma.mode) {
    case GammaMode::Fixed: return {cfg.gamma.gamma1_sq, cfg.gamma.gamma2_sq};
    case GammaMode::Corollary1: {
      const auto [a, b] = corollary1_gammas(cfg.gamma.gamma, cfg.gamma.p);
      return {a, b};
    }
    case GammaMode::Optimize: return {std::nullopt, std::nullopt};
  }
  return {std::nullopt, std::nullopt};
}

SynthesisOptions synthesis_options(const RunConfig& cfg) {
  SynthesisOptions so;
  so.strict_margin = cfg.tol.strict_margin;
  so.cert_tol = cfg.tol.cert_tol;
  so.solver.feas_tol = cfg.tol.feas_tol;
  return so;
}

LmiProgram build_for(DesignMode mode, const SynthesisData& data, const Vec& d_bar,
                     std::optional<double> g1, std::optional<double> g2,
                     const SynthesisOptions& so) {
  switch (mode) {
    case DesignMode::General: return build_theorem1(data, g1, g2, so);
    case DesignMode::ConstantMean: return build_theorem2(data, d_bar, g1, g2, so);
    case DesignMode::ZeroMean: return build_zero_mean(data, g2.value_or(0.0), so);
  }
  throw Error(ErrorKind::InvalidInput, "unknown design mode");
}

}  // namespace

OfflineProducts offline_from_basis(const RunConfig& cfg, BehaviorBasis basis) {
  OfflineProducts o;
  o.basis = std::move(basis);
  DecomposeOptions dopt;
  dopt.null_tol = cfg.tol.null_tol;
  o.dyn = stage("decompose", [&] { return decompose(o.basis, dopt); });
  AreOptions aopt;
  aopt.tol = cfg.tol.are_tol;
  o.ss = stage("are", [&] { return solve_are(o.dyn, o.basis, cfg.noise, aopt); });
  return o;
}

OfflineProducts offline_from_dataset(const RunConfig& cfg, const TrajectorySet& data) {
  LearnOptions lo;
  lo.gap_tol = cfg.tol.gap_tol;
  lo.auto_n_state = cfg.auto_n_state;
  BehaviorBasis b = stage("learn", [&] { return learn_basis(data, cfg.noise.S_n, cfg.layout, lo); });
  return offline_from_basis(cfg, std::move(b));
}

double design_rho(const RunConfig& cfg) {
  switch (cfg.mode) {
    case DesignMode::General: {
      const SinusoidStepForecast f(cfg.layout.q);
      return compute_rho(forecast_sequence(f, cfg.sim.horizon), cfg.noise.S_d);
    }
    case DesignMode::ConstantMean: return compute_rho(cfg.d_bar, cfg.noise.S_d);
    case DesignMode::ZeroMean: return 0.0;
  }
  return 0.0;
}

DesignOutcome design_controller(const RunConfig& cfg, const OfflineProducts& off) {
  const SynthesisData data{off.dyn, off.basis, off.ss, cfg.noise};
  const SynthesisOptions so = synthesis_options(cfg);
  auto [g1, g2] = resolve_gammas(cfg);
  if (cfg.mode == DesignMode::ZeroMean && !g2)
    throw Error(ErrorKind::Usage, "zero mean mode needs a fixed gamma2");
  DesignOutcome out{build_for(cfg.mode, data, cfg.d_bar, g1, g2, so), {}, 0.0};
  out.rho = stage("rho", [&] { return design_rho(cfg); });
  if (cfg.gamma.mode == GammaMode::Optimize) out.rho = out.lmi.rho;
  out.result = stage("synthesis", [&] { return solve_design(out.lmi, data, out.rho, so); });
  return out;
}

NoiseSources campaign_sources(const RunConfig& cfg, int campaign) {
  const int w = cfg.layout.w_dim();
  if (cfg.mixtures.kind == "gaussian") return gaussian_sources(cfg.noise, w);
  const std::uint64_t s = cfg.simulation_seed;
  const int k = cfg.mixtures.components;
  const double sp = cfg.mixtures.spread;
  // each campaign has its own disturbance distribution, same covariance
  return {random_mixture(cfg.noise.S_d, s * 7919 + 101 + static_cast<std::uint64_t>(campaign), k, sp),
          random_mixture(cfg.noise.S_u, s * 7919 + 11, k, sp),
          random_mixture(cfg.noise.S_n, s * 7919 + 13, k, sp)};
}

// ---------------------------------------------------------------- generate

int cmd_generate(const RunConfig& cfg, const CommandOptions& o, std::ostream& log) {
  if (!cfg.kernel) throw Error(ErrorKind::Schema, "generate: the config has no kernel model");
  DatasetOptions d = cfg.dataset;
  d.seed = cfg.dataset_seed;
  const TrajectorySet set =
      stage("generate", [&] { return generate_dataset(*cfg.kernel, cfg.layout, cfg.noise.S_n, d); });
  const fs::path p = fs::path(o.out) / "dataset.txt";
  auto out = open_out(p);
  auto header = provenance_header(cfg);
  header.push_back("trajectories " + std::to_string(d.trajectories) + " length " +
                   std::to_string(d.length));
  write_dataset(out, set, header);
  log << "wrote " << p.string() << " (" << d.trajectories << " trajectories of " << d.length
      << " steps)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- design

int cmd_design(const RunConfig& cfg, const CommandOptions& o, std::ostream& log) {
  const fs::path dpath = input_path(o.dataset, o.out, "dataset.txt");
  auto in = open_in(dpath);
  const TrajectorySet data = stage("dataset", [&] { return read_dataset(in); });
  const OfflineProducts off = offline_from_dataset(cfg, data);
  if (off.basis.gap_warning)
    log << "warning: weak spectral gap " << off.basis.spectral_gap << " in the learned basis\n";
  auto bout = open_out(fs::path(o.out) / "basis.txt");
  write_basis(bout, off.basis, provenance_header(cfg));

  const DesignOutcome d = design_controller(cfg, off);
  log << "mode " << to_string(cfg.mode) << ", gamma " << to_string(cfg.gamma.mode) << ": "
      << sdp::to_string(d.result.status) << " (phase-one margin " << d.result.solution.phase1_margin
      << ")\n";
  if (!d.result.design) {
    log << "no feasible design; "
        << (d.result.status == sdp::Status::Infeasible ? "the LMIs are infeasible"
                                                       : "the solver did not reach a certificate")
        << "\n";
    return d.result.status == sdp::Status::Infeasible ? kExitInfeasible : kExitFailure;
  }
  const ControllerDesign& des = *d.result.design;
  auto header = provenance_header(cfg);
  header.push_back("gamma_mode " + std::string(to_string(cfg.gamma.mode)));
  auto out = open_out(fs::path(o.out) / "design.txt");
  write_design(out, des, header);
  log << "gamma1^2 " << des.profile.gamma1_sq << " gamma2^2 " << des.profile.gamma2_sq << " rho "
      << des.profile.rho << " level " << des.profile.level() << "\n";
  if (des.objective) log << "objective " << *des.objective << "\n";
  for (const auto& [name, v] : des.block_margins) log << "  margin " << name << " " << v << "\n";
  log << "  storage min eig " << des.storage_min_eig << ", spectral radius "
      << spectral_radius(des.A_cl) << ", certified " << (des.certified ? "yes" : "no") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg, const CommandOptions& o, std::ostream& log) {
  if (!cfg.kernel) throw Error(ErrorKind::Schema, "simulate: the config has no kernel model");
  const auto t0 = std::chrono::steady_clock::now();
  auto bin = open_in(input_path(o.basis, o.out, "basis.txt"));
  BehaviorBasis basis = stage("basis", [&] { return read_basis(bin); });
  auto din = open_in(input_path(o.design, o.out, "design.txt"));
  const ControllerDesign des = stage("design", [&] { return read_design(din); });
  if (des.mode != cfg.mode)
    throw Error(ErrorKind::Usage, std::string("simulate: design artifact is for mode ") +
                                      to_string(des.mode) + ", config asks for " + to_string(cfg.mode));
  if (!(basis.layout == cfg.layout) && !cfg.auto_n_state)
    throw Error(ErrorKind::Schema, "simulate: basis layout does not match the config");
  const OfflineProducts off = offline_from_basis(cfg, std::move(basis));
  const auto forecast = forecast_for(cfg.mode, cfg.layout.q, cfg.d_bar);
  const int T = cfg.sim.horizon;
  const std::uint64_t S = cfg.simulation_seed;
  const auto header = provenance_header(cfg);
  const fs::path dir(o.out);

  RolloutOptions ro;
  ro.T = T;
  ro.overflow_cap = cfg.sim.overflow_cap;
  ro.initial_output_scale = cfg.sim.initial_output_scale;
  ro.keep_signals = false;

  std::vector<CdfCurve> finals;
  std::vector<RolloutRecord> first;
  int diverged = 0, total = 0;
  for (int c = 0; c < cfg.sim.campaigns; ++c) {
    const NoiseSources src = campaign_sources(cfg, c);
    const ClosedLoopSetup setup{*cfg.kernel, off.basis, off.dyn, cfg.noise, des, src};
    CampaignOptions co;
    co.cohort = cfg.sim.cohort;
    co.base_seed = S + static_cast<std::uint64_t>(c) * static_cast<std::uint64_t>(cfg.sim.cohort);
    co.threads = cfg.sim.threads;
    co.rollout = ro;
    auto recs = stage("campaign", [&] { return run_campaign(setup, *forecast, co); });
    for (const auto& r : recs) diverged += r.diverged ? 1 : 0;
    total += static_cast<int>(recs.size());
    finals.push_back(gamma_cdf(recs, T, gamma_grid()));
    if (c == 0) {
      first = std::move(recs);
      // display rollouts with full signals; same seeds as the campaign
      auto tout = open_out(dir / export_name("trajectories", S, T, cfg.mode));
      for (const auto& h : header) tout << "# " << h << "\n";
      const auto& l = cfg.layout;
      tout << "rollout k";
      for (int i = 1; i <= l.p; ++i) tout << " y" << i;
      for (int i = 1; i <= l.m; ++i) tout << " u" << i;
      for (int i = 1; i <= l.q; ++i) tout << " d" << i;
      for (int i = 1; i <= l.q; ++i) tout << " Ed" << i;
      tout << "\n";
      const int shown = std::min(cfg.sim.display, cfg.sim.cohort);
      for (int i = 0; i < shown; ++i) {
        RolloutOptions one = ro;
        one.keep_signals = true;
        one.seed = co.base_seed + static_cast<std::uint64_t>(i);
        const RolloutRecord r = run_closed_loop(setup, *forecast, one);
        for (int k = 0; k < r.steps; ++k) {
          tout << i << " " << k + 1;
          for (Eigen::Index j = 0; j < r.w_true.cols(); ++j) tout << " " << num(r.w_true(k, j));
          for (Eigen::Index j = 0; j < r.d_mean.cols(); ++j) tout << " " << num(r.d_mean(k, j));
          tout << "\n";
        }
      }
    }
  }

  const Vec grid = gamma_grid();
  const Vec bound = bound_curve(des.profile, grid);
  std::set<int> horizons(cfg.sim.cdf_horizons.begin(), cfg.sim.cdf_horizons.end());
  horizons.insert(T);
  std::vector<std::string> inner_lines;
  for (int t : horizons) {
    if (t > T) continue;
    CdfCurve c;
    try {
      c = gamma_cdf(first, t, grid);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyCohort) throw;
      inner_lines.push_back("inner " + std::to_string(t) + " undefined");
      continue;
    }
    auto out = open_out(dir / export_name("cdf", S, t, cfg.mode));
    auto h = header;
    h.push_back("horizon " + std::to_string(t));
    write_cdf(out, c, bound, h);
    const BoundTest bt = inner_test(c, bound);
    inner_lines.push_back("inner " + std::to_string(t) + " " + (bt.pass ? "pass" : "fail") + " " +
                          num(bt.min_difference) + " " + std::to_string(bt.violations.size()));
  }
  int first_pass = -1;
  for (int t = 1; t <= T && first_pass < 0; ++t) {
    try {
      if (inner_test(gamma_cdf(first, t, grid), bound).pass) first_pass = t;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyCohort) throw;
    }
  }
  int outer_pass = -1;
  if (finals.size() >= 2) {
    const auto tests = outer_test(finals, des.profile);
    outer_pass = static_cast<int>(std::count_if(tests.begin(), tests.end(), [](const BoundTest& b) { return b.pass; }));
    auto out = open_out(dir / export_name("outer", S, T, cfg.mode));
    for (const auto& h : header) out << "# " << h << "\n";
    out << "gamma bound";
    for (size_t c = 0; c < finals.size(); ++c) out << " campaign" << c + 1;
    out << "\n";
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      out << num(grid(i)) << " " << num(bound(i));
      for (const auto& f : finals) out << " " << num(f.cdf(i));
      out << "\n";
    }
  }

  const double frac = total ? double(diverged) / total : 0.0;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto sout = open_out(dir / export_name("summary", S, T, cfg.mode));
  for (const auto& h : header) sout << "# " << h << "\n";
  sout << "mode " << to_string(cfg.mode) << "\n";
  sout << "gamma_mode " << to_string(cfg.gamma.mode) << "\n";
  sout << "gamma1_sq " << num(des.profile.gamma1_sq) << "\n";
  sout << "gamma2_sq " << num(des.profile.gamma2_sq) << "\n";
  sout << "rho " << num(des.profile.rho) << "\n";
  sout << "level " << num(des.profile.level()) << "\n";
  sout << "cohort " << cfg.sim.cohort << "\n";
  sout << "campaigns " << cfg.sim.campaigns << "\n";
  sout << "horizon " << T << "\n";
  sout << "diverged " << diverged << " " << num(frac) << "\n";
  sout << "first_pass_T " << (first_pass > 0 ? std::to_string(first_pass) : "none") << "\n";
  for (const auto& l : inner_lines) sout << l << "\n";
  if (outer_pass >= 0) sout << "outer " << outer_pass << " " << finals.size() << "\n";
  sout << "runtime_s " << num(secs) << "\n";

  log << "simulated " << total << " rollouts (" << diverged << " diverged) in " << secs << " s\n";
  for (const auto& l : inner_lines) log << "  " << l << "\n";
  log << "  first passing horizon: " << (first_pass > 0 ? std::to_string(first_pass) : "none") << "\n";
  if (outer_pass >= 0) log << "  outer test: " << outer_pass << "/" << finals.size() << " campaigns pass\n";
  if (frac > cfg.sim.divergence_threshold) {
    log << "diverged fraction " << frac << " exceeds the threshold " << cfg.sim.divergence_threshold
        << "\n";
    return kExitDivergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report

namespace {

struct RunSummary {
  fs::path dir;
  std::string stem;  // seed/T/mode part of the file names
  std::map<std::string, std::string> kv;
  std::vector<std::string> inner;
  std::vector<int> cdf_horizons;
};

RunSummary read_summary(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Schema, "report: " + dir.string() + " is not a directory");
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("summary_", 0) == 0 && e.path().extension() == ".txt") found.push_back(e.path());
  }
  if (found.size() != 1)
    throw Error(ErrorKind::Schema, "report: expected exactly one summary file in " + dir.string());
  RunSummary s;
  s.dir = dir;
  s.stem = found[0].filename().string().substr(std::string("summary_").size());
  auto in = open_in(found[0]);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string rest;
    std::getline(ls, rest);
    if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
    if (key == "inner") {
      s.inner.push_back(rest);
      s.cdf_horizons.push_back(std::stoi(rest));
    } else {
      s.kv[key] = rest;
    }
  }
  for (const char* k : {"mode", "gamma_mode", "gamma1_sq", "gamma2_sq", "rho", "horizon"})
    if (!s.kv.count(k)) throw Error(ErrorKind::Schema, "report: " + found[0].string() + " lacks '" + k + "'");
  return s;
}

std::string seed_part(const RunSummary& s) {
  // "seed<S>_T<T>_<mode>.txt" -> "seed<S>"
  return s.stem.substr(0, s.stem.find('_'));
}

void copy_with_title(const fs::path& from, const fs::path& to, const std::string& title) {
  auto in = open_in(from);
  auto out = open_out(to);
  out << "# " << title << "\n";
  out << in.rdbuf();
}

void merge_cdfs(const RunSummary& s, const fs::path& to, const std::string& title) {
  std::vector<std::pair<int, CdfTable>> tables;
  for (int t : s.cdf_horizons) {
    const fs::path p = s.dir / ("cdf_" + seed_part(s) + "_T" + std::to_string(t) + "_" + s.kv.at("mode") + ".txt");
    if (!fs::exists(p)) continue;
    auto in = open_in(p);
    try {
      tables.emplace_back(t, read_cdf(in));
    } catch (const Error& e) {
      throw Error(ErrorKind::Schema, p.string() + ": " + e.what());
    }
  }
  if (tables.empty()) throw Error(ErrorKind::Schema, "report: no CDF files in " + s.dir.string());
  auto out = open_out(to);
  out << "# " << title << "\n";
  for (const auto& h : tables[0].second.header)
    if (h.rfind("horizon", 0) != 0) out << "# " << h << "\n";
  out << "gamma bound";
  for (const auto& [t, tab] : tables) out << " cdf_T" << t;
  out << "\n";
  const auto& g = tables[0].second.grid;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    out << num(g(i)) << " " << num(tables[0].second.bound(i));
    for (const auto& [t, tab] : tables) {
      if (tab.grid.size() != g.size()) throw Error(ErrorKind::Schema, "report: CDF grids differ");
      out << " " << num(tab.cdf(i));
    }
    out << "\n";
  }
}

}  // namespace

int cmd_report(const CommandOptions& o, std::ostream& log) {
  if (o.inputs.empty()) throw Error(ErrorKind::Usage, "report: no result directories given");
  std::vector<RunSummary> runs;
  for (const auto& d : o.inputs) runs.push_back(read_summary(d));
  const fs::path dir(o.out);

  // figure roles: general -> 1,2,3; constant, given gammas -> 4,5; constant, optimized -> 6,7
  struct Role {
    int inner_fig, outer_fig;
    const char* label;
  };
  std::set<std::string> taken;
  int written = 0;
  for (const auto& s : runs) {
    const std::string mode = s.kv.at("mode"), gm = s.kv.at("gamma_mode");
    std::optional<Role> role;
    if (mode == "general") role = Role{2, 3, "general"};
    if (mode == "constant") role = gm == "optimize" ? Role{6, 7, "constant_optimized"} : Role{4, 5, "constant"};
    if (!role) continue;
    if (!taken.insert(role->label).second)
      throw Error(ErrorKind::Usage, std::string("report: two runs for the ") + role->label + " figures");
    const std::string tail = "_" + seed_part(s) + "_T" + s.kv.at("horizon") + "_" + mode + ".txt";
    if (mode == "general") {
      const fs::path tp = s.dir / ("trajectories" + tail);
      if (fs::exists(tp)) {
        copy_with_title(tp, dir / "fig1_trajectories_general.txt",
                        "figure 1: closed-loop trajectories, time-varying mean");
        ++written;
      }
    }
    merge_cdfs(s, dir / ("fig" + std::to_string(role->inner_fig) + "_cdf_" + role->label + ".txt"),
               "figure " + std::to_string(role->inner_fig) + ": CDF of the truncated gain by horizon (" +
                   role->label + ")");
    ++written;
    const fs::path op = s.dir / ("outer" + tail);
    if (fs::exists(op)) {
      copy_with_title(op, dir / ("fig" + std::to_string(role->outer_fig) + "_outer_" + role->label + ".txt"),
                      "figure " + std::to_string(role->outer_fig) +
                          ": CDFs at the horizon across disturbance distributions (" + role->label + ")");
      ++written;
    }
  }

  auto out = open_out(dir / "report_summary.txt");
  out << "run mode gamma_mode gamma1_sq gamma2_sq rho level horizon first_pass_T inner_at_horizon outer diverged runtime_s\n";
  for (const auto& s : runs) {
    auto get = [&](const char* k) { return s.kv.count(k) ? s.kv.at(k) : std::string("-"); };
    std::string inner = "-";
    for (const auto& l : s.inner)
      if (std::stoi(l) == std::stoi(s.kv.at("horizon"))) inner = l.substr(l.find(' ') + 1, 4);
    std::string outer = get("outer");
    std::replace(outer.begin(), outer.end(), ' ', '/');
    std::string div = get("diverged");
    div = div.substr(0, div.find(' '));
    out << s.dir.filename().string() << " " << get("mode") << " " << get("gamma_mode") << " "
        << get("gamma1_sq") << " " << get("gamma2_sq") << " " << get("rho") << " " << get("level")
        << " " << get("horizon") << " " << get("first_pass_T") << " " << inner << " " << outer << " "
        << div << " " << get("runtime_s") << "\n";
  }
  log << "wrote " << written << " figure files and report_summary.txt to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- debug commands

namespace {

OfflineProducts offline_for_debug(const RunConfig& cfg, const CommandOptions& o) {
  const fs::path bpath = input_path(o.basis, o.out, "basis.txt");
  if (fs::exists(bpath)) {
    auto in = open_in(bpath);
    return offline_from_basis(cfg, read_basis(in));
  }
  const fs::path dpath = input_path(o.dataset, o.out, "dataset.txt");
  if (fs::exists(dpath)) {
    auto in = open_in(dpath);
    return offline_from_dataset(cfg, read_dataset(in));
  }
  if (!cfg.kernel) throw Error(ErrorKind::Usage, "no basis, dataset or kernel model available");
  return offline_from_basis(cfg, exact_basis_from_kernel(*cfg.kernel, cfg.layout));
}

}  // namespace

int cmd_are(const RunConfig& cfg, const CommandOptions& o, std::ostream& out) {
  const OfflineProducts off = offline_for_debug(cfg, o);
  write_steady_state_report(out, off.ss, provenance_header(cfg));
  return kExitOk;
}

int cmd_check(const RunConfig& cfg, const CommandOptions& o, std::ostream& out) {
  auto bin = open_in(input_path(o.basis, o.out, "basis.txt"));
  const OfflineProducts off = offline_from_basis(cfg, read_basis(bin));
  auto din = open_in(input_path(o.design, o.out, "design.txt"));
  const ControllerDesign des = read_design(din);
  const SynthesisData data{off.dyn, off.basis, off.ss, cfg.noise};
  const LmiProgram lmi = build_for(des.mode, data, des.d_bar, des.profile.gamma1_sq,
                                   des.profile.gamma2_sq, synthesis_options(cfg));
  bool ok = true;
  for (const auto& [name, v] : design_block_margins(lmi, des)) {
    out << "margin " << name << " " << num(v) << "\n";
    ok = ok && v >= -cfg.tol.cert_tol;
  }
  const double se = min_eig(symmetrize(des.M - off.basis.PiF_y().transpose() * off.basis.PiF_y()));
  out << "storage_min_eig " << num(se) << "\n";
  ok = ok && se >= -cfg.tol.cert_tol;
  // direct evaluation of the dissipation inequality at random points
  Rng rng(cfg.simulation_seed);
  std::normal_distribution<double> nd;
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    Vec g(off.basis.g_dim()), d(cfg.layout.q);
    for (auto& x : g) x = nd(rng);
    for (auto& x : d) x = nd(rng);
    if (des.mode == DesignMode::ConstantMean) d = des.d_bar;
    worst = std::min(worst, nominal_dissipation(des, off.basis, g, d) / std::max(1.0, g.squaredNorm()));
  }
  out << "dissipation_min " << num(worst) << "\n";
  ok = ok && worst >= -1e-7;
  out << "certified " << (ok ? "yes" : "no") << "\n";
  return ok ? kExitOk : kExitInfeasible;
}

}  // namespace probgain
