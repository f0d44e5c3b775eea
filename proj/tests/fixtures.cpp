#include "fixtures.hpp"

namespace probgain::testing {

const BenchmarkFixture& fixture() {
  static const BenchmarkFixture f = benchmark_fixture();
  return f;
}

Offline offline_for(const BehaviorBasis& basis, const NoiseModel& noise) {
  Offline o{basis, {}, {}};
  o.dyn = decompose(o.basis);
  o.ss = solve_are(o.dyn, o.basis, noise);
  return o;
}

const Offline& exact_offline() {
  static const Offline o = [] {
    const auto& fx = fixture();
    return offline_for(exact_basis_from_kernel(fx.kernel, fx.layout), fx.noise);
  }();
  return o;
}

const Offline& learned_offline() {
  static const Offline o = [] {
    const auto& fx = fixture();
    DatasetOptions d;
    d.seed = 7;
    const TrajectorySet data = generate_dataset(fx.kernel, fx.layout, fx.noise.S_n, d);
    return offline_for(learn_basis(data, fx.noise.S_n, fx.layout), fx.noise);
  }();
  return o;
}

Mat random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat A(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) A(i, j) = n(rng);
  return A;
}

Mat random_spd(int n, std::mt19937_64& rng, double floor) {
  const Mat G = random_matrix(n, n, rng);
  return G * G.transpose() / n + floor * Mat::Identity(n, n);
}

std::filesystem::path scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / ("probgain_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace probgain::testing
