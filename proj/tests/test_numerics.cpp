#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace probgain;
using probgain::testing::random_matrix;
using probgain::testing::random_spd;

namespace {

double rel(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

void expect_penrose(const Mat& A, const Mat& Ap, double tol) {
  EXPECT_LT(rel(A * Ap * A, A), tol);
  EXPECT_LT(rel(Ap * A * Ap, Ap), tol);
  EXPECT_LT(rel((A * Ap).transpose(), A * Ap), tol);
  EXPECT_LT(rel((Ap * A).transpose(), Ap * A), tol);
}

Mat orth(const Mat& A) { return orthonormalize(A); }

}  // namespace

TEST(SymEig, SortedDescendingWithDeterministicTies) {
  Mat A = Vec::LinSpaced(4, 1, 4).asDiagonal();
  const SymEig e = sym_eig(A);
  EXPECT_TRUE(std::is_sorted(e.values.data(), e.values.data() + 4, std::greater<>()));
  const SymEig e2 = sym_eig(Mat::Identity(3, 3) * 2.0);
  // tie group comes out as the identity columns, sign normalized
  EXPECT_LT((e2.vectors.cwiseAbs() - Mat::Identity(3, 3)).norm(), 1e-12);
  EXPECT_TRUE((e2.vectors.diagonal().array() > 0).all());
}

TEST(SymMatrix, RejectsAsymmetricInput) {
  Mat A(2, 2);
  A << 1, 2, 2.1, 1;
  EXPECT_THROW(SymMatrix{A}, Error);
  A(1, 0) = 2.0 + 1e-12;
  EXPECT_NO_THROW(SymMatrix{A});
  EXPECT_DOUBLE_EQ(SymMatrix(A).mat()(0, 1), SymMatrix(A).mat()(1, 0));
}

TEST(Pinv, Identity) { EXPECT_LT((pinv(Mat::Identity(3, 3)) - Mat::Identity(3, 3)).norm(), 1e-15); }

TEST(Pinv, RankDeficientDiagonal) {
  Mat A = Mat::Zero(2, 2);
  A(0, 0) = 2;
  Mat expect = Mat::Zero(2, 2);
  expect(0, 0) = 0.5;
  EXPECT_LT((pinv(A) - expect).norm(), 1e-15);
}

TEST(Pinv, OnesMatrix) {
  const Mat A = Mat::Ones(2, 2);
  const Mat Ap = pinv(A);
  EXPECT_LT((Ap - 0.25 * Mat::Ones(2, 2)).norm(), 1e-12);
  EXPECT_LT((A * Ap * A - A).norm(), 1e-12);
}

TEST(Pinv, PenroseConditionsOnRandomMatrices) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 2 + trial % 5, c = 3 + trial % 4, k = 1 + trial % std::min(r, c);
    const Mat A = random_matrix(r, k, rng) * random_matrix(k, c, rng);
    const Pseudoinverse P = pinv_full(A);
    EXPECT_EQ(P.rank, k);
    expect_penrose(A, P.pinv, 1e-10);
    EXPECT_LT((P.perp_left * A).norm(), 1e-10);
    EXPECT_LT((A * P.perp_right).norm(), 1e-10);
  }
}

TEST(Pinv, NonFiniteInputIsRejected) {
  Mat A = Mat::Identity(2, 2);
  A(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    pinv(A);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(PsdSqrt, IdentityAndDiagonal) {
  EXPECT_LT((psd_sqrt(Mat::Identity(4, 4)) - Mat::Identity(4, 4)).norm(), 1e-14);
  Mat D = Mat::Zero(2, 2);
  D.diagonal() << 4, 9;
  Mat R = Mat::Zero(2, 2);
  R.diagonal() << 2, 3;
  EXPECT_LT((psd_sqrt(D) - R).norm(), 1e-14);
}

TEST(PsdSqrt, ReconstructsRandomGram) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const Mat G = random_matrix(5, 5, rng);
    const Mat A = G.transpose() * G;
    const Mat B = psd_sqrt(A);
    EXPECT_LT((B - B.transpose()).norm(), 1e-14);
    EXPECT_LT((B * B - A).norm(), 1e-10);
  }
}

TEST(PsdSqrt, ProjectorIsFixedPoint) {
  std::mt19937_64 rng(6);
  const Mat U = orth(random_matrix(7, 3, rng));
  const Mat P = U * U.transpose();
  EXPECT_LT((psd_sqrt(P) - P).norm(), 1e-10);
}

TEST(PsdSqrt, ClampsTinyNegativeAndRejectsLarge) {
  Mat A = Mat::Identity(2, 2);
  A(1, 1) = -1e-10;
  EXPECT_NO_THROW(psd_sqrt(A));
  A(1, 1) = -1e-3;
  try {
    psd_sqrt(A);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPsd);
    EXPECT_NEAR(e.value(), -1e-3, 1e-12);
  }
}

TEST(SpdInverse, ConditionCap) {
  Mat A = Mat::Identity(2, 2);
  EXPECT_LT((spd_inverse(A) - A).norm(), 1e-15);
  A(1, 1) = 1e-12;
  EXPECT_THROW(spd_inverse(A), Error);
}

TEST(Chordal, IdenticalAndOrthogonal) {
  std::mt19937_64 rng(1);
  const Mat U = orth(random_matrix(8, 3, rng));
  EXPECT_LT(chordal_distance(U, U), 1e-14);
  const Mat e1 = Vec::Unit(2, 0), e2 = Vec::Unit(2, 1);
  EXPECT_NEAR(chordal_distance(e1, e2), 1.0, 1e-15);
}

TEST(Chordal, MatchesProjectorOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const Mat U = orth(random_matrix(20, 6, rng));
    const Mat V = orth(random_matrix(20, 6, rng));
    const double oracle = (U * U.transpose() - V * V.transpose()).norm() / std::sqrt(2.0);
    EXPECT_NEAR(chordal_distance(U, V), oracle, 1e-12);
  }
}

TEST(Chordal, InvariantToBasisChoice) {
  std::mt19937_64 rng(3);
  const Mat U = orth(random_matrix(10, 4, rng));
  const Mat V = orth(random_matrix(10, 4, rng));
  const Mat Q = orth(random_matrix(4, 4, rng));
  EXPECT_NEAR(chordal_distance(U * Q, V), chordal_distance(U, V), 1e-12);
}

TEST(Chordal, MetricProperties) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Mat A = orth(random_matrix(9, 3, rng));
    const Mat B = orth(random_matrix(9, 3, rng));
    const Mat C = orth(random_matrix(9, 3, rng));
    const double ab = chordal_distance(A, B), ba = chordal_distance(B, A);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-14);
    EXPECT_LE(ab, chordal_distance(A, C) + chordal_distance(C, B) + 1e-12);
  }
}

TEST(Chordal, RejectsNonOrthonormalInput) {
  Mat U = Mat::Zero(3, 2);
  U(0, 0) = 1;  // second column is zero
  const Mat V = Mat::Identity(3, 2);
  try {
    chordal_distance(U, V);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidBasis);
  }
}

TEST(QuadraticFreedom, FreeWhenBetaPositive) {
  QuadraticForm qf{Mat::Zero(2, 2), Mat::Identity(2, 2), Mat::Zero(2, 2), Vec::Zero(2), Vec::Zero(2), 1.0};
  const auto s = quadratic_freedom_solve(qf, 0.0);
  EXPECT_TRUE(s.feasible);
  EXPECT_EQ(s.K.norm(), 0.0);
  EXPECT_EQ(s.xi.norm(), 0.0);
}

TEST(QuadraticFreedom, NegativeOffsetWithZeroLinearTermIsInfeasible) {
  QuadraticForm qf{Mat::Zero(2, 2), Mat::Identity(2, 2), Mat::Zero(2, 2), Vec::Zero(2), Vec::Zero(2), -1.0};
  for (double tau : default_tau_scan()) EXPECT_FALSE(quadratic_freedom_solve(qf, tau).feasible);
}

TEST(QuadraticFreedom, SubstitutionOracleOnRandomInstance) {
  std::mt19937_64 rng(17);
  const int a = 3, b = 3;
  const Mat R = random_spd(b, rng);
  const Mat S = random_matrix(a, b, rng);
  // Q chosen so that the maximized form is PSD in v1 with some margin
  const Mat Q = -S * R.inverse() * S.transpose() + random_spd(a, rng);
  QuadraticForm qf{Q, R, S, random_matrix(a, 1, rng), random_matrix(b, 1, rng), 50.0};
  const auto s = quadratic_freedom_scan(qf);
  ASSERT_TRUE(s.feasible);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    Vec v1(a);
    for (int j = 0; j < a; ++j) v1(j) = n(rng);
    EXPECT_GE(qf.value(v1, s.K * v1 + s.xi), -1e-9);
  }
}

TEST(QuadraticFreedom, InfeasibleWhenQuadraticPartIndefinite) {
  std::mt19937_64 rng(19);
  const Mat R = random_spd(2, rng);
  const Mat S = random_matrix(2, 2, rng);
  Mat Q = -S * R.inverse() * S.transpose();
  Q(0, 0) -= 1.0;
  QuadraticForm qf{Q, R, S, Vec::Zero(2), Vec::Zero(2), 1.0};
  EXPECT_FALSE(quadratic_freedom_scan(qf).feasible);
}

TEST(QuadraticFreedom, RejectsIndefiniteR) {
  QuadraticForm qf{Mat::Zero(1, 1), -Mat::Identity(1, 1), Mat::Zero(1, 1), Vec::Zero(1), Vec::Zero(1), 1.0};
  EXPECT_THROW(quadratic_freedom_solve(qf, 0.0), Error);
}
