#pragma once

#include "probgain/numerics.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace probgain {

// Per-step ordering is (y, u, d). A window stacks L+1 consecutive steps,
// oldest first.
struct SignalLayout {
  int p = 1;
  int m = 1;
  int q = 1;
  int L = 1;
  int n_state = 0;

  int w_dim() const { return p + m + q; }
  int free_dim() const { return m + q; }
  int g_dim() const { return (L + 1) * (m + q) + n_state; }
  int window_rows() const { return (L + 1) * w_dim(); }
  void validate() const;

  Mat Pi_p() const;  // drops the oldest step
  Mat Pi_f() const;  // newest step
  Mat Pi_y() const;
  Mat Pi_u() const;
  Mat Pi_d() const;
};

bool operator==(const SignalLayout& a, const SignalLayout& b);

// One trajectory: rows are time steps, columns the per-step vector (y,u,d).
using Trajectory = Mat;

struct TrajectorySet {
  SignalLayout layout;
  std::vector<Trajectory> trajectories;

  int steps() const { return trajectories.empty() ? 0 : static_cast<int>(trajectories[0].rows()); }
  void validate() const;
};

// Kernel representation sum_j Ry[j] y_{k-j} + Ru[j] u_{k-j} + Rd[j] d_{k-j} = 0.
struct KernelModel {
  std::vector<Mat> Ry;
  std::vector<Mat> Ru;
  std::vector<Mat> Rd;

  int lag() const { return static_cast<int>(Ry.size()) - 1; }
  int p() const { return static_cast<int>(Ry.at(0).rows()); }
  int m() const { return static_cast<int>(Ru.at(0).cols()); }
  int q() const { return static_cast<int>(Rd.at(0).cols()); }
  void validate() const;
  // residual of the kernel equation at the last step of a (lag+1)-step window
  Vec residual(const Mat& window_steps) const;
};

struct BehaviorBasis {
  Mat F;
  SignalLayout layout;
  Vec spectrum;              // eigenvalues of the averaged Gram matrix, when learned
  double spectral_gap = 0;   // spectrum(g-1) / spectrum(g)
  bool gap_warning = false;

  int g_dim() const { return static_cast<int>(F.cols()); }
  Mat F_wp() const { return F.topRows(layout.L * layout.w_dim()); }
  Mat F_dk() const { return layout.Pi_d() * F; }
  Mat PiF_p() const { return layout.Pi_p() * F; }
  Mat PiF_f() const { return layout.Pi_f() * F; }
  Mat PiF_y() const { return layout.Pi_y() * F; }
  Mat PiF_u() const { return layout.Pi_u() * F; }
};

Mat hankel(const Trajectory& traj, int depth);

bool is_persistently_exciting(const Mat& input_traj, int order, double rank_tol = kRankTol);

struct LearnOptions {
  double gap_tol = 10.0;
  double rank_tol = kRankTol;
  bool auto_n_state = false;
  bool check_excitation = true;
};

BehaviorBasis learn_basis(const TrajectorySet& data, const Mat& S_n, const SignalLayout& layout,
                          const LearnOptions& opts = {});

// Averaged noise-compensated Gram matrix over all trajectories.
Mat compensated_gram(const TrajectorySet& data, const Mat& S_n, int depth);

BehaviorBasis exact_basis_from_kernel(const KernelModel& kernel, const SignalLayout& layout);

Vec state_map(const BehaviorBasis& basis, const Vec& window);

// stack rows [first, first+L] of a trajectory into a window
Vec window_at(const Trajectory& traj, int first, int depth);

void write_dataset(std::ostream& os, const TrajectorySet& data,
                   const std::vector<std::string>& header_lines = {});
TrajectorySet read_dataset(std::istream& is);

void write_basis(std::ostream& os, const BehaviorBasis& basis,
                 const std::vector<std::string>& header_lines = {});
BehaviorBasis read_basis(std::istream& is);

}  // namespace probgain
