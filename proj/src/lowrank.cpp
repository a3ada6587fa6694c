#include "geostat/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geostat/errors.hpp"
#include "geostat/nngp.hpp"

namespace geostat::lowrank {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::PP:
      return "pp";
    case Variant::MPP:
      return "mpp";
    case Variant::Radial:
      return "radial";
  }
  return "pp";
}

Variant variant_from_string(const std::string& s) {
  if (s == "pp") return Variant::PP;
  if (s == "mpp") return Variant::MPP;
  if (s == "radial") return Variant::Radial;
  throw InvalidParams("unknown low-rank variant '" + s + "'");
}

KnotSet grid_knots(const PointSet& points, std::size_t r) {
  if (points.empty()) throw InvalidParams("grid_knots: no points");
  const std::size_t dim = points.dim();
  const auto side = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(r), 1.0 / dim)));
  std::size_t total = 1;
  for (std::size_t k = 0; k < dim; ++k) total *= side;
  if (r == 0 || total != r)
    throw InvalidParams("grid_knots: r = " + std::to_string(r) + " is not a perfect power of the dimension");

  Vector lo(dim, std::numeric_limits<double>::infinity());
  Vector hi(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      lo[k] = std::min(lo[k], points[i][k]);
      hi[k] = std::max(hi[k], points[i][k]);
    }

  KnotSet out{PointSet(dim), KnotPlacement::Grid};
  std::vector<std::size_t> idx(dim, 0);
  Vector p(dim);
  for (std::size_t c = 0; c < r; ++c) {
    // First coordinate varies slowest.
    std::size_t rem = c;
    for (std::size_t k = dim; k-- > 0;) {
      idx[k] = rem % side;
      rem /= side;
    }
    for (std::size_t k = 0; k < dim; ++k)
      p[k] = lo[k] + (static_cast<double>(idx[k]) + 0.5) * (hi[k] - lo[k]) / static_cast<double>(side);
    out.knots.push_back(p);
  }
  return out;
}

KnotSet subset_knots(const PointSet& points, std::size_t r) {
  if (r == 0 || r > points.size()) throw InvalidParams("subset_knots: need 1 <= r <= n");
  std::vector<std::size_t> order = nngp::order_locations(points, nngp::Ordering::MaxMin);
  order.resize(r);
  return KnotSet{points.subset(order), KnotPlacement::Subset};
}

void LowRankSpec::validate() const {
  params.validate();
  const PointSet& k = knot_set.knots;
  if (k.size() == 0) throw InvalidParams("low-rank spec needs at least one knot");
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (distance(k[i], k[j]) < 1e-9)
        throw InvalidParams("knots " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
}

namespace {

// chol K(U*, U*) and G = L*⁻¹ K(U*, U); column i of G is the whitened
// cross-covariance of location i.
struct Projection {
  LowerTriangular chol;
  Matrix g;
};

Projection project(const PointSet& u, const LowRankSpec& spec) {
  const PointSet& knots = spec.knot_set.knots;
  if (u.dim() != knots.dim()) throw LengthMismatch("locations and knots differ in dimension");
  CovarianceParams kp = spec.params;
  kp.tau2 = 0.0;
  Projection pr;
  pr.chol = cholesky(cross_cov(knots, knots, kp));
  pr.g = trsolve(pr.chol, cross_cov(knots, u, kp));
  return pr;
}

Vector column_sq_norms(const Matrix& g) {
  Vector q(g.cols(), 0.0);
  for (std::size_t k = 0; k < g.rows(); ++k) {
    const auto row = g.row(k);
    for (std::size_t i = 0; i < g.cols(); ++i) q[i] += row[i] * row[i];
  }
  return q;
}

// n x r basis from a projection.
Matrix basis_from(const Projection& pr, Variant v) {
  if (v == Variant::Radial) return pr.g.transpose();
  return trsolve(pr.chol, pr.g, Transpose::Yes).transpose();
}

Vector noise_from(const Projection& pr, const LowRankSpec& spec) {
  Vector d(pr.g.cols(), spec.params.tau2);
  if (spec.variant == Variant::MPP) {
    const Vector q = column_sq_norms(pr.g);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += std::max(0.0, spec.params.sigma2 - q[i]);
  }
  return d;
}

}  // namespace

Vector pp_basis(Location target, const LowRankSpec& spec) {
  PointSet t(target.size());
  t.push_back(target);
  const Matrix b = basis_from(project(t, spec), spec.variant);
  return Vector(b.row(0).begin(), b.row(0).end());
}

double residual_var(Location target, const LowRankSpec& spec) {
  PointSet t(target.size());
  t.push_back(target);
  return std::max(0.0, spec.params.sigma2 - column_sq_norms(project(t, spec).g)[0]);
}

Matrix build_B(const PointSet& u, const LowRankSpec& spec) { return basis_from(project(u, spec), spec.variant); }

Vector noise_diag(const PointSet& u, const LowRankSpec& spec) {
  if (spec.variant != Variant::MPP) return Vector(u.size(), spec.params.tau2);
  return noise_from(project(u, spec), spec);
}

Matrix latent_cov(const LowRankSpec& spec) {
  const std::size_t r = spec.knot_set.size();
  if (spec.variant == Variant::Radial) return Matrix::identity(r);
  CovarianceParams kp = spec.params;
  kp.tau2 = 0.0;
  return cross_cov(spec.knot_set.knots, spec.knot_set.knots, kp);
}

LowRankSystem::LowRankSystem(const Matrix& b, const Matrix& vz, std::span<const double> d) {
  if (b.rows() != d.size()) throw LengthMismatch("basis rows and noise length differ");
  if (!vz.square() || vz.rows() != b.cols()) throw LengthMismatch("latent covariance has wrong shape");
  const std::size_t n = d.size();
  const std::size_t r = b.cols();

  inv_sqrt_d_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(d[i] > 0.0)) throw InvalidParams("noise variances must be positive");
    inv_sqrt_d_[i] = 1.0 / std::sqrt(d[i]);
    sum_log_d_ += std::log(d[i]);
  }
  w_ = whiten(b);

  const LowerTriangular lv = cholesky(vz);
  Matrix p = chol_inverse(lv);
  const Matrix wtw = gram(w_);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) p(i, j) += wtw(i, j);
  const LowerTriangular l = cholesky(p);
  h_ = trsolve(l, w_.transpose());

  // det(I - H Hᵀ) = det(V⁻¹) / det(L Lᵀ), so Σ ln t_ii follows from the two
  // factors already at hand without forming I - H Hᵀ.
  sum_log_t_ = -0.5 * logdet_from_chol(lv) - 0.5 * logdet_from_chol(l);
}

double LowRankSystem::log_density(std::span<const double> e) const {
  const Vector m1 = whiten(e);
  const Vector m2 = matvec(h_, m1);
  return -0.5 * sum_log_d_ + sum_log_t_ - 0.5 * (dot(m1, m1) - dot(m2, m2));
}

double LowRankSystem::logdet() const { return sum_log_d_ - 2.0 * sum_log_t_; }

Vector LowRankSystem::apply_inverse(std::span<const double> e) const {
  Vector m1 = whiten(e);
  const Vector m2 = matvec(h_, m1);
  const Vector back = matvec_t(h_, m2);
  for (std::size_t i = 0; i < m1.size(); ++i) m1[i] = inv_sqrt_d_[i] * (m1[i] - back[i]);
  return m1;
}

Matrix LowRankSystem::inverse() const {
  Matrix out = multiply_at_b(h_, h_);
  for (std::size_t i = 0; i < n(); ++i)
    for (std::size_t j = 0; j < n(); ++j)
      out(i, j) = inv_sqrt_d_[i] * ((i == j ? 1.0 : 0.0) - out(i, j)) * inv_sqrt_d_[j];
  return out;
}

Vector LowRankSystem::whiten(std::span<const double> v) const {
  if (v.size() != n()) throw LengthMismatch("vector length differs from system size");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = inv_sqrt_d_[i] * v[i];
  return out;
}

Matrix LowRankSystem::whiten(const Matrix& m) const {
  if (m.rows() != n()) throw LengthMismatch("matrix rows differ from system size");
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (double& x : out.row(i)) x *= inv_sqrt_d_[i];
  return out;
}

// All variants share the marginal B V Bᵀ = Gᵀ G, so the likelihood is built
// from the whitened basis with V = I; this never inverts K(U*, U*).
LowRankSystem make_system(const PointSet& u, const LowRankSpec& spec) {
  spec.validate();
  const Projection pr = project(u, spec);
  return LowRankSystem(pr.g.transpose(), Matrix::identity(pr.g.rows()), noise_from(pr, spec));
}

namespace {

class LowRankState : public ParameterState {
 public:
  LowRankState(const Dataset& data, const LowRankSpec& spec)
      : system_(make_system(data.locations, spec)),
        f_(system_.whiten(data.y)),
        ff_(system_.whiten(data.x)),
        hf_(matvec(system_.h(), f_)),
        hff_(multiply(system_.h(), ff_)) {}

  double log_likelihood(std::span<const double> beta) const override {
    const Vector fb = matvec(ff_, beta);
    const Vector hfb = matvec(hff_, beta);
    double q1 = 0.0;
    for (std::size_t i = 0; i < f_.size(); ++i) {
      const double m = f_[i] - fb[i];
      q1 += m * m;
    }
    double q2 = 0.0;
    for (std::size_t k = 0; k < hf_.size(); ++k) {
      const double m = hf_[k] - hfb[k];
      q2 += m * m;
    }
    return -0.5 * system_.logdet() - 0.5 * (q1 - q2);
  }

  Vector draw_beta(const BetaPrior& prior, Rng& rng) const override {
    const std::size_t p = ff_.cols();
    Matrix precision = prior.precision(p);
    const Matrix a = gram(ff_);
    const Matrix b = gram(hff_);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) precision(i, j) += a(i, j) - b(i, j);
    Vector linear = prior.precision_times_mean(p);
    const Vector fa = matvec_t(ff_, f_);
    const Vector fb = matvec_t(hff_, hf_);
    for (std::size_t i = 0; i < p; ++i) linear[i] += fa[i] - fb[i];
    return draw_from_canonical(precision, linear, rng);
  }

 private:
  LowRankSystem system_;
  Vector f_;
  Matrix ff_;
  Vector hf_;
  Matrix hff_;
};

Gaussian moments_from(const Matrix& a, const Matrix& bt_dinv, std::span<const double> e) {
  const Vector lin = matvec(bt_dinv, e);
  return Gaussian{matvec(a, lin), a};
}

// Bᵀ D⁻¹ for the spec at the data locations, together with B and V.
struct ZSetup {
  Matrix b;
  Matrix v;
  Matrix bt_dinv;
  Vector e;
};

ZSetup z_setup(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta) {
  spec.validate();
  const Projection pr = project(data.locations, spec);
  ZSetup s{basis_from(pr, spec.variant), latent_cov(spec), Matrix(), data.residual(beta)};
  const Vector d = noise_from(pr, spec);
  s.bt_dinv = s.b.transpose();
  for (std::size_t k = 0; k < s.bt_dinv.rows(); ++k) {
    auto row = s.bt_dinv.row(k);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] /= d[i];
  }
  return s;
}

Matrix symmetrized(Matrix a) {
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = m;
      a(j, i) = m;
    }
  return a;
}

Matrix stable_cov(const ZSetup& s) {
  // Q = (Bᵀ D⁻¹ B)⁻¹, A = Q - Q (V + Q)⁻¹ Q.
  const Matrix q = chol_inverse(cholesky(multiply(s.bt_dinv, s.b)));
  Matrix vq = s.v;
  for (std::size_t i = 0; i < vq.rows(); ++i)
    for (std::size_t j = 0; j < vq.cols(); ++j) vq(i, j) += q(i, j);
  const Matrix c = trsolve(cholesky(vq), q);
  return symmetrized(subtract(q, gram(c)));
}

Matrix direct_cov(const ZSetup& s) {
  Matrix p = chol_inverse(cholesky(s.v));
  const Matrix btdb = multiply(s.bt_dinv, s.b);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) += btdb(i, j);
  return chol_inverse(cholesky(symmetrized(p)));
}

}  // namespace

double lowrank_log_target(const Dataset& data, std::span<const double> beta, const LowRankSpec& spec,
                          const PriorSpec& priors) {
  const double lp = priors.log_density(spec.params);
  if (!std::isfinite(lp)) return lp;
  return lp + LowRankState(data, spec).log_likelihood(beta);
}

Vector gibbs_beta(const Dataset& data, const LowRankSpec& spec, const BetaPrior& prior, Rng& rng) {
  return LowRankState(data, spec).draw_beta(prior, rng);
}

Gaussian z_posterior(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta) {
  const ZSetup s = z_setup(data, spec, beta);
  return moments_from(stable_cov(s), s.bt_dinv, s.e);
}

Gaussian z_posterior_direct(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta) {
  const ZSetup s = z_setup(data, spec, beta);
  return moments_from(direct_cov(s), s.bt_dinv, s.e);
}

Vector recover_z(const Dataset& data, const LowRankSpec& spec, std::span<const double> beta, Rng& rng) {
  const ZSetup s = z_setup(data, spec, beta);
  Matrix a;
  LowerTriangular chol;
  try {
    a = stable_cov(s);
    chol = cholesky(a);
  } catch (const NotPositiveDefinite&) {
    a = direct_cov(s);
    chol = cholesky(a);
  }
  const Gaussian g = moments_from(a, s.bt_dinv, s.e);
  return sample_mvn(g.mean, chol, rng);
}

Matrix predict_y(const PointSet& targets, const Matrix& x_targets, const LowRankSpec& spec_template,
                 std::span<const ParameterDraw> draws, std::span<const Vector> z_draws, Rng& rng) {
  if (draws.empty()) throw InsufficientDraws("predict_y: no posterior draws");
  if (z_draws.size() != draws.size()) throw LengthMismatch("predict_y: one z draw per parameter draw needed");
  if (x_targets.rows() != targets.size()) throw LengthMismatch("predict_y: target regressors have wrong shape");

  Matrix out(draws.size(), targets.size());
  for (std::size_t d = 0; d < draws.size(); ++d) {
    LowRankSpec spec = spec_template;
    spec.params = draws[d].params;
    spec.params.family = spec_template.params.family;
    spec.params.nu = spec_template.params.nu;
    const Projection pr = project(targets, spec);
    const Matrix b = basis_from(pr, spec.variant);
    const Vector noise = noise_from(pr, spec);
    const Vector fixed = matvec(x_targets, draws[d].beta);
    const Vector spatial = matvec(b, z_draws[d]);
    for (std::size_t t = 0; t < targets.size(); ++t)
      out(d, t) = fixed[t] + spatial[t] + std::sqrt(noise[t]) * rng.normal();
  }
  return out;
}

LowRankBackend::LowRankBackend(Dataset data, Variant variant, KnotSet knots, CovFamily family, double nu)
    : data_(std::move(data)), variant_(variant), knots_(std::move(knots)), family_(family), nu_(nu) {
  data_.validate();
  spec(base_params()).validate();
}

CovarianceParams LowRankBackend::base_params() const {
  CovarianceParams p;
  p.family = family_;
  p.nu = nu_;
  return p;
}

LowRankSpec LowRankBackend::spec(const CovarianceParams& params) const {
  LowRankSpec s;
  s.variant = variant_;
  s.knot_set = knots_;
  s.params = params;
  return s;
}

std::unique_ptr<ParameterState> LowRankBackend::factorize(const CovarianceParams& params) {
  return std::make_unique<LowRankState>(data_, spec(params));
}

}  // namespace geostat::lowrank
