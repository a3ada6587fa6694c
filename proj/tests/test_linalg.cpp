#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geostat/errors.hpp"
#include "geostat/linalg.hpp"
#include "support.hpp"

using namespace geostat;
namespace ts = testing_support;

namespace {

double rel_frobenius(const Matrix& a, const Matrix& b) {
  return frobenius_norm(subtract(a, b)) / frobenius_norm(b);
}

Matrix reconstruct(const LowerTriangular& l) { return ts::naive_mul(l.matrix(), ts::naive_transpose(l.matrix())); }

}  // namespace

TEST(Cholesky, IdentityIsItsOwnFactor) {
  const LowerTriangular l = cholesky(Matrix::identity(3));
  EXPECT_EQ(ts::max_abs_diff(l.matrix(), Matrix::identity(3)), 0.0);
}

TEST(Cholesky, DiagonalGivesSquareRoots) {
  const LowerTriangular l = cholesky(Matrix{{4, 0}, {0, 9}});
  EXPECT_DOUBLE_EQ(l(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(l(1, 1), 3.0);
  EXPECT_EQ(l(1, 0), 0.0);
  EXPECT_EQ(l(0, 1), 0.0);
}

TEST(Cholesky, ReconstructsRandomSpd) {
  std::mt19937_64 gen(11);
  for (std::size_t n : {1, 2, 6, 20, 60}) {
    const Matrix m = ts::random_spd(n, gen);
    const LowerTriangular l = cholesky(m);
    EXPECT_LT(rel_frobenius(reconstruct(l), m), n == 6 ? 1e-12 : 1e-10) << "n=" << n;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GT(l(i, i), 0.0);
      for (std::size_t j = i + 1; j < n; ++j) EXPECT_EQ(l(i, j), 0.0);
    }
  }
}

TEST(Cholesky, RejectsIndefinite) {
  EXPECT_THROW(cholesky(Matrix{{1, 2}, {2, 1}}), NotPositiveDefinite);
  EXPECT_THROW(cholesky(Matrix{{-1}}), NotPositiveDefinite);
}

TEST(Cholesky, RejectsAsymmetricAndNonSquare) {
  EXPECT_THROW(cholesky(Matrix{{2, 1}, {0, 2}}), InputError);
  EXPECT_THROW(cholesky(Matrix(2, 3, 1.0)), InputError);
}

TEST(Cholesky, JitterRescuesRankDeficientPsd) {
  // Rank one, so the second pivot is exactly zero; the jitter makes it PD.
  const Matrix m{{1, 1}, {1, 1}};
  const LowerTriangular l = cholesky(m);
  EXPECT_LT(ts::max_abs_diff(reconstruct(l), m), 1e-8);
  EXPECT_GT(l(1, 1), 0.0);
}

TEST(Trsolve, IdentityAndDiagonal) {
  const Matrix b{{1, 2}, {3, 4}};
  EXPECT_EQ(ts::max_abs_diff(trsolve(LowerTriangular(Matrix::identity(2)), b), b), 0.0);
  const Vector x = trsolve(LowerTriangular(Matrix{{2, 0}, {0, 4}}), Vector{2, 8});
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
}

TEST(Trsolve, ResidualOracleBothDirections) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  const std::size_t n = 12;
  Matrix t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) t(i, j) = z(gen);
    t(i, i) = 1.0 + std::abs(z(gen));
  }
  Matrix x(n, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = z(gen);
  const LowerTriangular lt(t);
  const Matrix b = ts::naive_mul(t, x);
  EXPECT_LT(ts::max_abs_diff(trsolve(lt, b), x), 1e-10);
  const Matrix bt = ts::naive_mul(ts::naive_transpose(t), x);
  EXPECT_LT(ts::max_abs_diff(trsolve(lt, bt, Transpose::Yes), x), 1e-10);

  Vector col(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = b(i, 1);
  const Vector xs = trsolve(lt, col);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(xs[i], x(i, 1), 1e-10);
}

TEST(Trsolve, ZeroDiagonalThrows) {
  const LowerTriangular t(Matrix{{1, 0}, {1, 0}});
  EXPECT_THROW(trsolve(t, Vector{1, 1}), ZeroDiagonal);
  EXPECT_THROW(trsolve(LowerTriangular(Matrix{{1e-301}}), Vector{1}), ZeroDiagonal);
}

TEST(Logdet, KnownValues) {
  EXPECT_EQ(logdet_from_chol(cholesky(Matrix::identity(4))), 0.0);
  EXPECT_NEAR(logdet_from_chol(cholesky(Matrix{{4, 0}, {0, 9}})), std::log(36.0), 1e-14);
}

TEST(Logdet, MatchesCofactorExpansion) {
  std::mt19937_64 gen(3);
  for (std::size_t n = 1; n <= 5; ++n) {
    for (int rep = 0; rep < 5; ++rep) {
      const Matrix m = ts::random_spd(n, gen);
      const double brute = std::log(ts::cofactor_det(m));
      EXPECT_LT(ts::rel_diff(logdet_from_chol(cholesky(m)), brute), 1e-10) << "n=" << n;
    }
  }
}

TEST(SampleMvn, NearZeroVarianceReturnsMean) {
  Rng rng(1);
  const Vector mean{1.5, -2.0};
  const Vector x = sample_mvn(mean, LowerTriangular(Matrix{{1e-12, 0}, {0, 1e-12}}), rng);
  EXPECT_NEAR(x[0], 1.5, 1e-9);
  EXPECT_NEAR(x[1], -2.0, 1e-9);
}

TEST(SampleMvn, DeterministicUnderSeed) {
  const LowerTriangular l = cholesky(Matrix{{2, 1}, {1, 2}});
  Rng a(42);
  Rng b(42);
  EXPECT_EQ(sample_mvn(Vector{0, 0}, l, a), sample_mvn(Vector{0, 0}, l, b));
}

TEST(SampleMvn, MonteCarloCovariance) {
  const Matrix cov{{2, 1}, {1, 2}};
  const LowerTriangular l = cholesky(cov);
  Rng rng(7);
  const int draws = 100000;
  double s00 = 0, s01 = 0, s11 = 0, m0 = 0, m1 = 0;
  for (int k = 0; k < draws; ++k) {
    const Vector x = sample_mvn(Vector{0, 0}, l, rng);
    m0 += x[0];
    m1 += x[1];
    s00 += x[0] * x[0];
    s01 += x[0] * x[1];
    s11 += x[1] * x[1];
  }
  m0 /= draws;
  m1 /= draws;
  EXPECT_NEAR(s00 / draws - m0 * m0, 2.0, 0.1);
  EXPECT_NEAR(s01 / draws - m0 * m1, 1.0, 0.05);
  EXPECT_NEAR(s11 / draws - m1 * m1, 2.0, 0.1);
}

TEST(Canonical, MeanAndCovarianceFromPrecision) {
  // Precision P and linear term h: mean P⁻¹h, covariance P⁻¹.
  const Matrix p{{3, 1}, {1, 2}};
  const Vector h{1, -1};
  const ts::Inverted g = ts::gauss_jordan(p);
  const Vector mean{g.inv(0, 0) * h[0] + g.inv(0, 1) * h[1], g.inv(1, 0) * h[0] + g.inv(1, 1) * h[1]};
  Rng rng(9);
  const int draws = 100000;
  double m0 = 0, m1 = 0, s00 = 0, s01 = 0, s11 = 0;
  for (int k = 0; k < draws; ++k) {
    const Vector x = draw_from_canonical(p, h, rng);
    m0 += x[0];
    m1 += x[1];
    s00 += x[0] * x[0];
    s01 += x[0] * x[1];
    s11 += x[1] * x[1];
  }
  m0 /= draws;
  m1 /= draws;
  EXPECT_NEAR(m0, mean[0], 0.01);
  EXPECT_NEAR(m1, mean[1], 0.01);
  EXPECT_NEAR(s00 / draws - m0 * m0, g.inv(0, 0), 0.05 * g.inv(0, 0));
  EXPECT_NEAR(s01 / draws - m0 * m1, g.inv(0, 1), 0.05 * std::abs(g.inv(0, 1)));
  EXPECT_NEAR(s11 / draws - m1 * m1, g.inv(1, 1), 0.05 * g.inv(1, 1));
}

TEST(Products, AgreeWithNaiveLoops) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> z;
  Matrix a(4, 3), b(4, 5), c(3, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) a(i, j) = z(gen);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) b(i, j) = z(gen);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) c(i, j) = z(gen);
  const Matrix at = ts::naive_transpose(a);
  EXPECT_LT(ts::max_abs_diff(multiply(a, c), ts::naive_mul(a, c)), 1e-12);
  EXPECT_LT(ts::max_abs_diff(multiply_at_b(a, b), ts::naive_mul(at, b)), 1e-12);
  EXPECT_LT(ts::max_abs_diff(multiply_a_bt(c.transpose(), c.transpose()),
                             ts::naive_mul(ts::naive_transpose(c), c)),
            1e-12);
  EXPECT_LT(ts::max_abs_diff(gram(a), ts::naive_mul(at, a)), 1e-12);
  const Vector v{1, 2, 3};
  const Vector av = matvec(a, v);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(av[i], a(i, 0) + 2 * a(i, 1) + 3 * a(i, 2), 1e-12);
  const Vector w{1, -1, 2, 0.5};
  const Vector atw = matvec_t(a, w);
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_NEAR(atw[j], a(0, j) - a(1, j) + 2 * a(2, j) + 0.5 * a(3, j), 1e-12);
}

TEST(CholInverse, MatchesGaussJordan) {
  std::mt19937_64 gen(8);
  const Matrix m = ts::random_spd(7, gen);
  const LowerTriangular l = cholesky(m);
  EXPECT_LT(ts::max_abs_diff(chol_inverse(l), ts::gauss_jordan(m).inv), 1e-12);
  const Vector b{1, 2, 3, 4, 5, 6, 7};
  const Vector x = chol_solve(l, b);
  const Vector back = matvec(m, x);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(back[i], b[i], 1e-10);
}
