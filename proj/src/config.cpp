#include "probgain/config.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace probgain {

using nlohmann::json;

const char* to_string(GammaMode mode) {
  switch (mode) {
    case GammaMode::Fixed: return "fixed";
    case GammaMode::Corollary1: return "corollary1";
    case GammaMode::Optimize: return "optimize";
  }
  return "unknown";
}

namespace {

[[noreturn]] void schema(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::Schema, "config " + path + ": " + what);
}

// Walks one JSON object; every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema(path_, "expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) schema(path_ + "." + it.key(), "unknown key");
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }

  void number(const std::string& key, double& out) {
    if (auto v = get(key)) {
      if (!v->is_number()) schema(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void integer(const std::string& key, int& out) {
    if (auto v = get(key)) {
      if (!v->is_number_integer()) schema(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void seed(const std::string& key, std::uint64_t& out) {
    if (auto v = get(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        schema(at(key), "expected a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (auto v = get(key)) {
      if (!v->is_string()) schema(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Mat matrix_from(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema(path, "expected a non-empty array");
  if (j[0].is_number()) {
    // a flat list is a diagonal
    Vec d(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) schema(path, "expected numbers");
      d(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return d.asDiagonal();
  }
  const size_t rows = j.size(), cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) schema(path, "expected rows of numbers");
  Mat M(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) schema(path, "ragged matrix");
    for (size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) schema(path, "expected numbers");
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return M;
}

std::vector<Mat> matrices_from(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema(path, "expected a list of matrices");
  std::vector<Mat> out;
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].empty() || !j[i][0].is_array())
      schema(path + "[" + std::to_string(i) + "]", "expected a matrix (list of rows)");
    out.push_back(matrix_from(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Vec vector_from(const json& j, const std::string& path) {
  if (!j.is_array()) schema(path, "expected an array of numbers");
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) schema(path, "expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json to_json(const Mat& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const std::vector<Mat>& ms) {
  json a = json::array();
  for (const auto& M : ms) a.push_back(to_json(M));
  return a;
}

}  // namespace

void RunConfig::validate() const {
  try {
    layout.validate();
  } catch (const Error& e) {
    schema("layout", e.what());
  }
  if (kernel) {
    try {
      kernel->validate();
    } catch (const Error& e) {
      schema("kernel", e.what());
    }
    if (kernel->p() != layout.p || kernel->m() != layout.m || kernel->q() != layout.q)
      schema("kernel", "channel counts do not match the layout");
    if (kernel->lag() > layout.L) schema("kernel", "lag exceeds layout.L");
  }
  try {
    noise.validate(layout);
  } catch (const Error& e) {
    schema("noise", e.what());
  }
  if (mixtures.kind != "mixture" && mixtures.kind != "gaussian")
    schema("mixtures.kind", "expected 'mixture' or 'gaussian'");
  if (mixtures.components < 1) schema("mixtures.components", "must be positive");
  if (!(mixtures.spread >= 0 && mixtures.spread < 1)) schema("mixtures.spread", "must lie in [0,1)");
  if (dataset.trajectories < 1) schema("dataset.trajectories", "must be positive");
  if (dataset.length < 1) schema("dataset.length", "must be positive");
  if (!(dataset.excitation_std > 0)) schema("dataset.excitation_std", "must be positive");
  if (dataset.max_retries < 0) schema("dataset.max_retries", "must be nonnegative");
  switch (gamma.mode) {
    case GammaMode::Fixed:
      if (!(gamma.gamma1_sq >= 0 && gamma.gamma2_sq > 0))
        schema("gamma", "fixed gammas: gamma1_sq must be nonnegative and gamma2_sq positive");
      break;
    case GammaMode::Corollary1:
      if (!(gamma.gamma > 0) || !(gamma.p > 0 && gamma.p <= 1))
        schema("gamma", "corollary1 needs gamma > 0 and p in (0,1]");
      break;
    case GammaMode::Optimize:
      if (mode != DesignMode::ConstantMean) schema("gamma.mode", "optimize requires the constant mean mode");
      break;
  }
  if (mode == DesignMode::ConstantMean && d_bar.size() != layout.q)
    schema("disturbance.d_bar", "constant mean mode needs d_bar with q entries");
  if (sim.horizon < 1) schema("simulation.horizon", "must be positive");
  if (sim.cohort < 1) schema("simulation.cohort", "must be positive");
  if (sim.campaigns < 1) schema("simulation.campaigns", "must be positive");
  if (sim.display < 0) schema("simulation.display", "must be nonnegative");
  for (int t : sim.cdf_horizons)
    if (t < 1) schema("simulation.cdf_horizons", "entries must be positive");
  if (!(sim.overflow_cap > 0)) schema("simulation.overflow_cap", "must be positive");
  if (!(sim.initial_output_scale >= 0)) schema("simulation.initial_output_scale", "must be nonnegative");
  if (!(sim.divergence_threshold >= 0 && sim.divergence_threshold <= 1))
    schema("simulation.divergence_threshold", "must lie in [0,1]");
  if (sim.threads < 0) schema("simulation.threads", "must be nonnegative");
  for (auto [name, v] : {std::pair{"null_tol", tol.null_tol}, {"strict_margin", tol.strict_margin},
                         {"feas_tol", tol.feas_tol}, {"cert_tol", tol.cert_tol},
                         {"are_tol", tol.are_tol}, {"gap_tol", tol.gap_tol}})
    if (!(v > 0)) schema(std::string("tolerances.") + name, "must be positive");
}

RunConfig default_config() {
  const BenchmarkFixture f = benchmark_fixture();
  RunConfig c;
  c.layout = f.layout;
  c.kernel = f.kernel;
  c.noise = f.noise;
  c.d_bar = Vec::Ones(f.layout.q);
  return c;
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, std::string("config: not valid JSON: ") + e.what());
  }
  RunConfig c = default_config();
  Section top(root, "$");

  if (auto j = top.get("layout")) {
    Section s(*j, "$.layout");
    s.integer("p", c.layout.p);
    s.integer("m", c.layout.m);
    s.integer("q", c.layout.q);
    s.integer("L", c.layout.L);
    if (auto n = s.get("n_state")) {
      if (n->is_string() && n->get<std::string>() == "auto")
        c.auto_n_state = true;
      else if (n->is_number_integer())
        c.layout.n_state = n->get<int>();
      else
        schema("$.layout.n_state", "expected an integer or \"auto\"");
    }
  }
  if (auto j = top.get("kernel")) {
    if (j->is_null()) {
      c.kernel.reset();
    } else {
      Section s(*j, "$.kernel");
      KernelModel k;
      auto req = [&](const char* key) {
        auto v = s.get(key);
        if (!v) schema(s.at(key), "missing");
        return matrices_from(*v, s.at(key));
      };
      k.Ry = req("Ry");
      k.Ru = req("Ru");
      k.Rd = req("Rd");
      c.kernel = k;
    }
  }
  if (auto j = top.get("noise")) {
    Section s(*j, "$.noise");
    if (auto v = s.get("S_d")) c.noise.S_d = matrix_from(*v, s.at("S_d"));
    if (auto v = s.get("S_u")) c.noise.S_u = matrix_from(*v, s.at("S_u"));
    if (auto v = s.get("S_n")) c.noise.S_n = matrix_from(*v, s.at("S_n"));
  }
  if (auto j = top.get("mixtures")) {
    Section s(*j, "$.mixtures");
    s.string("kind", c.mixtures.kind);
    s.integer("components", c.mixtures.components);
    s.number("spread", c.mixtures.spread);
  }
  if (auto j = top.get("dataset")) {
    Section s(*j, "$.dataset");
    s.integer("trajectories", c.dataset.trajectories);
    s.integer("length", c.dataset.length);
    s.number("excitation_std", c.dataset.excitation_std);
    s.integer("max_retries", c.dataset.max_retries);
  }
  if (auto j = top.get("gamma")) {
    Section s(*j, "$.gamma");
    std::string mode = to_string(c.gamma.mode);
    s.string("mode", mode);
    if (mode == "fixed")
      c.gamma.mode = GammaMode::Fixed;
    else if (mode == "corollary1")
      c.gamma.mode = GammaMode::Corollary1;
    else if (mode == "optimize")
      c.gamma.mode = GammaMode::Optimize;
    else
      schema("$.gamma.mode", "expected fixed|corollary1|optimize");
    s.number("gamma1_sq", c.gamma.gamma1_sq);
    s.number("gamma2_sq", c.gamma.gamma2_sq);
    s.number("gamma", c.gamma.gamma);
    s.number("p", c.gamma.p);
  }
  if (auto j = top.get("disturbance")) {
    Section s(*j, "$.disturbance");
    std::string mode = to_string(c.mode);
    s.string("mode", mode);
    try {
      c.mode = parse_mode(mode);
    } catch (const Error&) {
      schema("$.disturbance.mode", "expected general|constant|zero");
    }
    if (auto v = s.get("d_bar")) c.d_bar = vector_from(*v, s.at("d_bar"));
  }
  if (auto j = top.get("simulation")) {
    Section s(*j, "$.simulation");
    s.integer("horizon", c.sim.horizon);
    s.integer("cohort", c.sim.cohort);
    s.integer("campaigns", c.sim.campaigns);
    s.integer("display", c.sim.display);
    s.number("overflow_cap", c.sim.overflow_cap);
    s.number("initial_output_scale", c.sim.initial_output_scale);
    s.number("divergence_threshold", c.sim.divergence_threshold);
    s.integer("threads", c.sim.threads);
    if (auto v = s.get("cdf_horizons")) {
      if (!v->is_array()) schema(s.at("cdf_horizons"), "expected an array of integers");
      c.sim.cdf_horizons.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) schema(s.at("cdf_horizons"), "expected integers");
        c.sim.cdf_horizons.push_back(e.get<int>());
      }
    }
  }
  if (auto j = top.get("seeds")) {
    Section s(*j, "$.seeds");
    s.seed("dataset", c.dataset_seed);
    s.seed("simulation", c.simulation_seed);
  }
  if (auto j = top.get("tolerances")) {
    Section s(*j, "$.tolerances");
    s.number("null_tol", c.tol.null_tol);
    s.number("strict_margin", c.tol.strict_margin);
    s.number("feas_tol", c.tol.feas_tol);
    s.number("cert_tol", c.tol.cert_tol);
    s.number("are_tol", c.tol.are_tol);
    s.number("gap_tol", c.tol.gap_tol);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Schema, "config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_json(const RunConfig& c) {
  json j;
  j["layout"] = {{"p", c.layout.p}, {"m", c.layout.m}, {"q", c.layout.q}, {"L", c.layout.L}};
  if (c.auto_n_state)
    j["layout"]["n_state"] = "auto";
  else
    j["layout"]["n_state"] = c.layout.n_state;
  if (c.kernel)
    j["kernel"] = {{"Ry", to_json(c.kernel->Ry)}, {"Ru", to_json(c.kernel->Ru)}, {"Rd", to_json(c.kernel->Rd)}};
  else
    j["kernel"] = nullptr;
  j["noise"] = {{"S_d", to_json(c.noise.S_d)}, {"S_u", to_json(c.noise.S_u)}, {"S_n", to_json(c.noise.S_n)}};
  j["mixtures"] = {{"kind", c.mixtures.kind}, {"components", c.mixtures.components},
                   {"spread", c.mixtures.spread}};
  j["dataset"] = {{"trajectories", c.dataset.trajectories}, {"length", c.dataset.length},
                  {"excitation_std", c.dataset.excitation_std}, {"max_retries", c.dataset.max_retries}};
  j["gamma"] = {{"mode", to_string(c.gamma.mode)}, {"gamma1_sq", c.gamma.gamma1_sq},
                {"gamma2_sq", c.gamma.gamma2_sq}, {"gamma", c.gamma.gamma}, {"p", c.gamma.p}};
  j["disturbance"] = {{"mode", to_string(c.mode)}, {"d_bar", to_json(c.d_bar)}};
  j["simulation"] = {{"horizon", c.sim.horizon},
                     {"cohort", c.sim.cohort},
                     {"campaigns", c.sim.campaigns},
                     {"cdf_horizons", c.sim.cdf_horizons},
                     {"display", c.sim.display},
                     {"overflow_cap", c.sim.overflow_cap},
                     {"initial_output_scale", c.sim.initial_output_scale},
                     {"divergence_threshold", c.sim.divergence_threshold},
                     {"threads", c.sim.threads}};
  j["seeds"] = {{"dataset", c.dataset_seed}, {"simulation", c.simulation_seed}};
  j["tolerances"] = {{"null_tol", c.tol.null_tol},   {"strict_margin", c.tol.strict_margin},
                     {"feas_tol", c.tol.feas_tol},   {"cert_tol", c.tol.cert_tol},
                     {"are_tol", c.tol.are_tol},     {"gap_tol", c.tol.gap_tol}};
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_json(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> provenance_header(const RunConfig& cfg) {
  return {"config_hash " + config_hash(cfg), "seeds dataset=" + std::to_string(cfg.dataset_seed) +
                                                 " simulation=" + std::to_string(cfg.simulation_seed)};
}

}  // namespace probgain
