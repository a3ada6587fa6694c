#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geostat/errors.hpp"
#include "geostat/fullgp.hpp"
#include "geostat/lowrank.hpp"
#include "support.hpp"

using namespace geostat;
using namespace geostat::lowrank;
namespace ts = testing_support;

namespace {

CovarianceParams expo(double sigma2, double phi, double tau2) {
  CovarianceParams p;
  p.sigma2 = sigma2;
  p.phi = phi;
  p.tau2 = tau2;
  return p;
}

LowRankSpec make_spec(Variant v, PointSet knots, CovarianceParams p) {
  LowRankSpec s;
  s.variant = v;
  s.knot_set = KnotSet{std::move(knots), KnotPlacement::User};
  s.params = p;
  return s;
}

PriorSpec test_priors() {
  PriorSpec pr;
  pr.sigma2 = InverseGamma{2.0, 1.0};
  pr.tau2 = InverseGamma{2.0, 0.5};
  pr.phi = UniformPrior{0.1, 50.0};
  return pr;
}

// Dense B V Bᵀ + D assembled from the public pieces.
Matrix dense_sigma(const PointSet& u, const LowRankSpec& s) {
  const Matrix b = build_B(u, s);
  Matrix sigma = ts::naive_mul(ts::naive_mul(b, latent_cov(s)), ts::naive_transpose(b));
  const Vector d = noise_diag(u, s);
  for (std::size_t i = 0; i < d.size(); ++i) sigma(i, i) += d[i];
  return sigma;
}

}  // namespace

TEST(Knots, GridCellCentres) {
  const PointSet pts(2, {0, 0, 1, 1, 0, 1, 1, 0});
  const KnotSet k = grid_knots(pts, 4);
  ASSERT_EQ(k.size(), 4u);
  EXPECT_EQ(k.placement, KnotPlacement::Grid);
  EXPECT_DOUBLE_EQ(k.knots[0][0], 0.25);
  EXPECT_DOUBLE_EQ(k.knots[0][1], 0.25);
  EXPECT_DOUBLE_EQ(k.knots[3][0], 0.75);
  EXPECT_DOUBLE_EQ(k.knots[3][1], 0.75);
  EXPECT_THROW(grid_knots(pts, 5), InvalidParams);
}

TEST(Knots, SubsetTakesDataPoints) {
  std::mt19937_64 gen(1);
  const PointSet pts = ts::random_points(40, gen);
  const KnotSet k = subset_knots(pts, 7);
  ASSERT_EQ(k.size(), 7u);
  for (std::size_t j = 0; j < 7; ++j) {
    bool found = false;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (distance(k.knots[j], pts[i]) == 0.0) found = true;
    EXPECT_TRUE(found);
  }
  EXPECT_THROW(subset_knots(pts, 41), InvalidParams);
}

TEST(Spec, RejectsCoincidentKnots) {
  LowRankSpec s = make_spec(Variant::PP, PointSet(2, {0, 0, 1e-10, 0}), expo(1, 1, 0.1));
  EXPECT_THROW(s.validate(), InvalidParams);
  s.knot_set.knots = PointSet(2);
  EXPECT_THROW(s.validate(), InvalidParams);
}

TEST(PpBasis, UnitVectorAtKnot) {
  std::mt19937_64 gen(2);
  const PointSet knots = ts::random_points(6, gen);
  const LowRankSpec s = make_spec(Variant::PP, knots, expo(1.3, 3.0, 0.1));
  for (std::size_t j = 0; j < knots.size(); ++j) {
    const Vector b = pp_basis(knots[j], s);
    for (std::size_t k = 0; k < b.size(); ++k) EXPECT_NEAR(b[k], j == k ? 1.0 : 0.0, 1e-10);
  }
}

TEST(PpBasis, SingleKnotScalar) {
  const LowRankSpec s = make_spec(Variant::PP, PointSet(2, {0.5, 0.5}), expo(2.0, 1.5, 0.1));
  const double t[2] = {0.1, 0.2};
  const Vector b = pp_basis(Location(t, 2), s);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_NEAR(b[0], 2.0 * std::exp(-1.5 * 0.5) / 2.0, 1e-14);
}

TEST(PpBasis, SandwichCovariance) {
  const PointSet knots(2, {0, 0, 1, 0, 0.3, 0.8});
  const CovarianceParams p = expo(1.1, 2.0, 0.0);
  const LowRankSpec s = make_spec(Variant::PP, knots, p);
  const double l1[2] = {0.4, 0.2};
  const double l2[2] = {0.7, 0.6};
  const Vector b = pp_basis(Location(l1, 2), s);
  double lhs = 0.0;
  for (std::size_t j = 0; j < 3; ++j) lhs += b[j] * kernel(knots[j], Location(l2, 2), p);
  // K(l1, U*) K*⁻¹ K(U*, l2) with the inverse from Gauss-Jordan.
  const Matrix kinv = ts::gauss_jordan(cross_cov(knots, knots, p)).inv;
  double rhs = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      rhs += kernel(Location(l1, 2), knots[i], p) * kinv(i, j) * kernel(knots[j], Location(l2, 2), p);
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(ResidualVar, ZeroAtKnotsAndSillWhenUncorrelated) {
  const PointSet knots(2, {0, 0, 1, 0, 0, 1});
  const LowRankSpec s = make_spec(Variant::PP, knots, expo(1.7, 2.0, 0.1));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(residual_var(knots[j], s), 0.0, 1e-12);
  const double far[2] = {1e5, 1e5};
  EXPECT_NEAR(residual_var(Location(far, 2), s), 1.7, 1e-12);
}

TEST(ResidualVar, MatchesJointConditioning) {
  const PointSet knots(2, {0.1, 0.1, 0.9, 0.2, 0.4, 0.8, 0.6, 0.5});
  const CovarianceParams p = expo(1.4, 3.0, 0.0);
  const LowRankSpec s = make_spec(Variant::PP, knots, p);
  const double t[2] = {0.3, 0.4};
  PointSet all = knots;
  all.push_back(Location(t, 2));
  const ts::Conditional c = ts::condition(cross_cov(all, all, p), {4}, {0, 1, 2, 3}, Vector{0, 0, 0, 0});
  EXPECT_NEAR(residual_var(Location(t, 2), s), c.cov(0, 0), 1e-12);
}

TEST(BuildB, IdentityAtKnotsAndRowsMatchBasis) {
  std::mt19937_64 gen(3);
  const PointSet knots = ts::random_points(5, gen);
  const LowRankSpec s = make_spec(Variant::PP, knots, expo(1.0, 2.0, 0.1));
  EXPECT_LT(ts::max_abs_diff(build_B(knots, s), Matrix::identity(5)), 1e-10);

  const PointSet one = ts::random_points(1, gen);
  const Matrix b = build_B(one, s);
  const Vector pb = pp_basis(one[0], s);
  ASSERT_EQ(b.rows(), 1u);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(b(0, j), pb[j], 1e-14);
}

TEST(BuildB, PpAndRadialShareLowRankCovariance) {
  std::mt19937_64 gen(4);
  const PointSet knots = ts::random_points(6, gen);
  const PointSet u = ts::random_points(15, gen);
  const CovarianceParams p = expo(1.2, 2.5, 0.3);
  const LowRankSpec pp = make_spec(Variant::PP, knots, p);
  const LowRankSpec rad = make_spec(Variant::Radial, knots, p);
  const Matrix bp = build_B(u, pp);
  const Matrix br = build_B(u, rad);
  EXPECT_GT(ts::max_abs_diff(bp, br), 1e-3);
  const Matrix cp = ts::naive_mul(ts::naive_mul(bp, latent_cov(pp)), ts::naive_transpose(bp));
  const Matrix cr = ts::naive_mul(br, ts::naive_transpose(br));
  EXPECT_LT(ts::max_abs_diff(cp, cr), 1e-10);
  EXPECT_EQ(ts::max_abs_diff(latent_cov(rad), Matrix::identity(6)), 0.0);
}

TEST(NoiseDiag, VariantsAndVarianceMatching) {
  std::mt19937_64 gen(5);
  const PointSet knots = ts::random_points(4, gen);
  const PointSet u = ts::random_points(12, gen);
  const CovarianceParams p = expo(1.6, 3.0, 0.4);
  for (double v : noise_diag(u, make_spec(Variant::PP, knots, p))) EXPECT_EQ(v, 0.4);
  for (double v : noise_diag(knots, make_spec(Variant::MPP, knots, p))) EXPECT_NEAR(v, 0.4, 1e-12);
  const LowRankSpec mpp = make_spec(Variant::MPP, knots, p);
  const Matrix sigma = dense_sigma(u, mpp);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(sigma(i, i), 2.0, 1e-10);
}

TEST(System, WoodburyInverseAndDeterminant) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 5 + rep * 3;
    const std::size_t r = 1 + rep % 8;
    Matrix b(n, r);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < r; ++j) b(i, j) = z(gen);
    const Matrix v = ts::random_spd(r, gen);
    Vector d(n);
    for (double& x : d) x = unif(gen);
    Matrix sigma = ts::naive_mul(ts::naive_mul(b, v), ts::naive_transpose(b));
    for (std::size_t i = 0; i < n; ++i) sigma(i, i) += d[i];
    const ts::Inverted g = ts::gauss_jordan(sigma);

    const LowRankSystem sys(b, v, d);
    EXPECT_LT(ts::max_abs_diff(sys.inverse(), g.inv), 1e-8);
    EXPECT_LT(ts::rel_diff(sys.logdet(), g.logabsdet), 1e-8);
    Vector e(n);
    for (double& x : e) x = z(gen);
    EXPECT_LT(ts::rel_diff(sys.log_density(e), ts::dense_log_density(sigma, e)), 1e-8);
    const Vector ae = sys.apply_inverse(e);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g.inv(i, j) * e[j];
      EXPECT_NEAR(ae[i], acc, 1e-8);
    }
  }
}

TEST(System, ZeroBasisIsDiagonalNoise) {
  const Vector d{0.5, 1.0, 2.0};
  const LowRankSystem sys(Matrix(3, 2), Matrix::identity(2), d);
  const Vector e{1.0, -1.0, 0.5};
  const double expected = -0.5 * std::log(0.5 * 1.0 * 2.0) - 0.5 * (1.0 / 0.5 + 1.0 / 1.0 + 0.25 / 2.0);
  EXPECT_NEAR(sys.log_density(e), expected, 1e-14);
}

TEST(LogTarget, MatchesDenseMarginalForEveryVariant) {
  std::mt19937_64 gen(7);
  const PriorSpec priors = test_priors();
  for (Variant v : {Variant::PP, Variant::MPP, Variant::Radial}) {
    for (int rep = 0; rep < 5; ++rep) {
      const Dataset data = ts::random_dataset(20 + 5 * rep, 1, gen);
      const LowRankSpec s = make_spec(v, ts::random_points(2 + rep, gen), expo(0.8 + rep * 0.1, 2.0 + rep, 0.3));
      const Vector beta{0.2, -0.3};
      const double expected =
          priors.log_density(s.params) + ts::dense_log_density(dense_sigma(data.locations, s), data.residual(beta));
      EXPECT_LT(ts::rel_diff(lowrank_log_target(data, beta, s, priors), expected), 1e-8) << to_string(v);
    }
  }
}

TEST(LogTarget, FarKnotsReduceToNoiseOnly) {
  std::mt19937_64 gen(8);
  const Dataset data = ts::random_dataset(15, 0, gen);
  const PriorSpec priors = test_priors();
  const LowRankSpec s = make_spec(Variant::PP, PointSet(2, {1e4, 1e4}), expo(1.0, 5.0, 0.6));
  double expected = priors.log_density(s.params) - 0.5 * 15 * std::log(0.6);
  for (double y : data.y) expected -= 0.5 * (y - 0.1) * (y - 0.1) / 0.6;
  EXPECT_NEAR(lowrank_log_target(data, Vector{0.1}, s, priors), expected, 1e-10);
}

TEST(LogTarget, KnotsAtDataReproduceFullGp) {
  std::mt19937_64 gen(9);
  const Dataset data = ts::random_dataset(25, 1, gen);
  const CovarianceParams p = expo(1.0, 3.0, 1e-3);
  const LowRankSpec s = make_spec(Variant::PP, data.locations, p);
  PriorSpec flat = test_priors();
  const Vector beta{0.0, 0.5};
  const double lr = lowrank_log_target(data, beta, s, flat) - flat.log_density(p);
  EXPECT_LT(ts::rel_diff(lr, fullgp::dense_loglik(data, beta, p)), 1e-6);
}

TEST(GibbsBeta, MonteCarloMatchesConjugateMoments) {
  std::mt19937_64 gen(10);
  const Dataset data = ts::random_dataset(30, 1, gen);
  const LowRankSpec s = make_spec(Variant::MPP, ts::random_points(4, gen), expo(1.0, 2.0, 0.4));
  BetaPrior prior;
  prior.flat = false;
  prior.mean = {0.5, -0.5};
  prior.cov = Matrix{{2.0, 0.3}, {0.3, 1.0}};

  const Matrix sinv = ts::gauss_jordan(dense_sigma(data.locations, s)).inv;
  const Matrix vinv = ts::gauss_jordan(prior.cov).inv;
  const Matrix xt = ts::naive_transpose(data.x);
  Matrix prec = ts::naive_mul(ts::naive_mul(xt, sinv), data.x);
  Matrix ymat(30, 1), mu(2, 1);
  for (std::size_t i = 0; i < 30; ++i) ymat(i, 0) = data.y[i];
  mu(0, 0) = 0.5;
  mu(1, 0) = -0.5;
  Matrix lin = ts::naive_mul(ts::naive_mul(xt, sinv), ymat);
  const Matrix vmu = ts::naive_mul(vinv, mu);
  for (std::size_t i = 0; i < 2; ++i) {
    lin(i, 0) += vmu(i, 0);
    for (std::size_t j = 0; j < 2; ++j) prec(i, j) += vinv(i, j);
  }
  const Matrix cov = ts::gauss_jordan(prec).inv;
  const Matrix mean = ts::naive_mul(cov, lin);

  Rng rng(11);
  const int draws = 10000;
  double m[2] = {0, 0}, c[3] = {0, 0, 0};
  for (int k = 0; k < draws; ++k) {
    const Vector b = gibbs_beta(data, s, prior, rng);
    m[0] += b[0];
    m[1] += b[1];
    c[0] += b[0] * b[0];
    c[1] += b[0] * b[1];
    c[2] += b[1] * b[1];
  }
  for (double& x : m) x /= draws;
  EXPECT_NEAR(m[0], mean(0, 0), 0.05 * std::max(std::abs(mean(0, 0)), std::sqrt(cov(0, 0))));
  EXPECT_NEAR(m[1], mean(1, 0), 0.05 * std::max(std::abs(mean(1, 0)), std::sqrt(cov(1, 1))));
  EXPECT_NEAR(c[0] / draws - m[0] * m[0], cov(0, 0), 0.05 * cov(0, 0));
  EXPECT_NEAR(c[2] / draws - m[1] * m[1], cov(1, 1), 0.05 * cov(1, 1));
  EXPECT_NEAR(c[1] / draws - m[0] * m[1], cov(0, 1), 0.05 * std::sqrt(cov(0, 0) * cov(1, 1)));
}

TEST(GibbsBeta, ConcentratesAtGlsWhenNoiseVanishes) {
  std::mt19937_64 gen(12);
  Dataset data = ts::random_dataset(200, 1, gen);
  for (std::size_t i = 0; i < data.n(); ++i) data.y[i] = 1.0 + 2.0 * data.x(i, 1) + 1e-3 * data.y[i];
  const LowRankSpec s = make_spec(Variant::PP, ts::random_points(4, gen), expo(1e-6, 2.0, 1e-6));
  Rng rng(13);
  const Vector b = gibbs_beta(data, s, BetaPrior{}, rng);
  EXPECT_NEAR(b[0], 1.0, 1e-2);
  EXPECT_NEAR(b[1], 2.0, 1e-2);
}

TEST(GibbsBeta, DeterministicUnderSeed) {
  std::mt19937_64 gen(14);
  const Dataset data = ts::random_dataset(20, 1, gen);
  const LowRankSpec s = make_spec(Variant::Radial, ts::random_points(3, gen), expo(1.0, 2.0, 0.5));
  Rng a(5), b(5);
  EXPECT_EQ(gibbs_beta(data, s, BetaPrior{}, a), gibbs_beta(data, s, BetaPrior{}, b));
}

TEST(RecoverZ, ScalarPosterior) {
  std::mt19937_64 gen(15);
  const Dataset data = ts::random_dataset(10, 0, gen);
  const CovarianceParams p = expo(1.5, 2.0, 0.3);
  const LowRankSpec s = make_spec(Variant::PP, PointSet(2, {0.5, 0.5}), p);
  const Matrix b = build_B(data.locations, s);
  double prec = 1.0 / 1.5;
  double lin = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    prec += b(i, 0) * b(i, 0) / 0.3;
    lin += b(i, 0) * (data.y[i] - 0.2) / 0.3;
  }
  const Gaussian g = z_posterior(data, s, Vector{0.2});
  EXPECT_NEAR(g.cov(0, 0), 1.0 / prec, 1e-12);
  EXPECT_NEAR(g.mean[0], lin / prec, 1e-12);

  Rng rng(16);
  double m = 0.0, ss = 0.0;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) {
    const double z = recover_z(data, s, Vector{0.2}, rng)[0];
    m += z;
    ss += z * z;
  }
  m /= draws;
  EXPECT_NEAR(m, lin / prec, 4 * std::sqrt(1.0 / prec / draws));
  EXPECT_NEAR(ss / draws - m * m, 1.0 / prec, 0.05 / prec);
}

TEST(RecoverZ, StableFormEqualsDirectForm) {
  std::mt19937_64 gen(17);
  for (Variant v : {Variant::PP, Variant::MPP, Variant::Radial}) {
    const Dataset data = ts::random_dataset(40, 1, gen);
    const LowRankSpec s = make_spec(v, ts::random_points(5, gen), expo(1.2, 3.0, 0.25));
    const Gaussian a = z_posterior(data, s, Vector{0.1, 0.2});
    const Gaussian b = z_posterior_direct(data, s, Vector{0.1, 0.2});
    EXPECT_LT(ts::max_abs_diff(a.cov, b.cov), 1e-8);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(a.mean[j], b.mean[j], 1e-8);
  }
}

TEST(RecoverZ, DeterministicUnderSeed) {
  std::mt19937_64 gen(18);
  const Dataset data = ts::random_dataset(30, 0, gen);
  const LowRankSpec s = make_spec(Variant::PP, ts::random_points(4, gen), expo(1.0, 3.0, 0.2));
  Rng a(3), b(3);
  EXPECT_EQ(recover_z(data, s, Vector{0.0}, a), recover_z(data, s, Vector{0.0}, b));
}

TEST(PredictY, KnotTargetMeanWithTinyNugget) {
  const PointSet knots(2, {0, 0, 1, 0, 0, 1});
  const LowRankSpec s = make_spec(Variant::PP, knots, expo(1.0, 2.0, 1e-12));
  const std::vector<ParameterDraw> draws{ParameterDraw{s.params, Vector{0.5}}};
  const std::vector<Vector> z{Vector{1.0, -2.0, 3.0}};
  Rng rng(1);
  const Matrix y = predict_y(knots, Matrix(3, 1, 1.0), s, draws, z, rng);
  EXPECT_NEAR(y(0, 0), 1.5, 1e-5);
  EXPECT_NEAR(y(0, 1), -1.5, 1e-5);
  EXPECT_NEAR(y(0, 2), 3.5, 1e-5);
}

TEST(PredictY, MonteCarloMeanAndMppVariance) {
  std::mt19937_64 gen(19);
  const PointSet knots = ts::random_points(4, gen);
  const PointSet targets = ts::random_points(3, gen);
  const CovarianceParams p = expo(1.0, 3.0, 0.2);
  for (Variant v : {Variant::PP, Variant::MPP}) {
    const LowRankSpec s = make_spec(v, knots, p);
    const int draws = 10000;
    const std::vector<ParameterDraw> pd(draws, ParameterDraw{p, Vector{0.3}});
    const std::vector<Vector> zd(draws, Vector{0.5, -0.5, 1.0, 0.0});
    Rng rng(20);
    const Matrix y = predict_y(targets, Matrix(3, 1, 1.0), s, pd, zd, rng);
    const Matrix b = build_B(targets, s);
    const Vector noise = noise_diag(targets, s);
    for (std::size_t t = 0; t < 3; ++t) {
      const double mean = 0.3 + 0.5 * b(t, 0) - 0.5 * b(t, 1) + b(t, 2);
      const double var = v == Variant::PP ? 0.2 : 0.2 + residual_var(targets[t], s);
      EXPECT_NEAR(noise[t], var, 1e-12);
      double m = 0.0, ss = 0.0;
      for (int k = 0; k < draws; ++k) {
        m += y(k, t);
        ss += y(k, t) * y(k, t);
      }
      m /= draws;
      EXPECT_NEAR(m, mean, 3 * std::sqrt(var / draws));
      EXPECT_NEAR(ss / draws - m * m, var, 0.06 * var);
    }
    Rng again(20);
    EXPECT_EQ(predict_y(targets, Matrix(3, 1, 1.0), s, pd, zd, again).values()[0], y.values()[0]);
  }
}

TEST(PredictY, RejectsEmptyDraws) {
  const LowRankSpec s = make_spec(Variant::PP, PointSet(2, {0, 0}), expo(1, 1, 0.1));
  Rng rng(1);
  EXPECT_THROW(predict_y(PointSet(2, {1, 1}), Matrix(1, 1, 1.0), s, {}, {}, rng), InsufficientDraws);
}

TEST(Backend, StateMatchesLogTargetAndGeometry) {
  std::mt19937_64 gen(21);
  const Dataset data = ts::random_dataset(50, 0, gen);
  LowRankBackend backend(data, Variant::MPP, grid_knots(data.locations, 9));
  const CovarianceParams p = expo(1.0, 4.0, 0.3);
  const PriorSpec priors = test_priors();
  const double expected = lowrank_log_target(data, Vector{0.1}, backend.spec(p), priors) - priors.log_density(p);
  EXPECT_NEAR(backend.factorize(p)->log_likelihood(Vector{0.1}), expected, 1e-10);

  // delta² >= 0 everywhere and the mpp marginal variance is the sill plus nugget.
  const LowRankSpec s = backend.spec(p);
  const PointSet targets = ts::random_points(1000, gen, -0.2, 1.2);
  const Vector d = noise_diag(targets, s);
  const Matrix b = build_B(targets, s);
  const Matrix k = latent_cov(s);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    EXPECT_GE(residual_var(targets[t], s), 0.0);
    double bvb = 0.0;
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t j = 0; j < 9; ++j) bvb += b(t, i) * k(i, j) * b(t, j);
    EXPECT_NEAR(bvb + d[t], 1.3, 1e-10);
  }
}
