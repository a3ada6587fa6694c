#include "geostat/fullgp.hpp"

#include <algorithm>
#include <cmath>

#include "geostat/errors.hpp"

namespace geostat::fullgp {

namespace {

// Whitened system: L⁻¹ y and L⁻¹ X for L = chol(Sigma).
class DenseState : public ParameterState {
 public:
  DenseState(const Dataset& data, const CovarianceParams& params)
      : chol_(cholesky(marginal_cov(data.locations, params))),
        white_y_(trsolve(chol_, std::span<const double>(data.y))),
        white_x_(trsolve(chol_, data.x)),
        half_logdet_(0.5 * logdet_from_chol(chol_)) {}

  double log_likelihood(std::span<const double> beta) const override {
    const Vector fitted = matvec(white_x_, beta);
    double q = 0.0;
    for (std::size_t i = 0; i < fitted.size(); ++i) {
      const double r = white_y_[i] - fitted[i];
      q += r * r;
    }
    return -half_logdet_ - 0.5 * q;
  }

  Vector draw_beta(const BetaPrior& prior, Rng& rng) const override {
    const std::size_t p = white_x_.cols();
    Matrix precision = prior.precision(p);
    const Matrix xtx = gram(white_x_);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) precision(i, j) += xtx(i, j);
    Vector linear = prior.precision_times_mean(p);
    const Vector xty = matvec_t(white_x_, white_y_);
    for (std::size_t i = 0; i < p; ++i) linear[i] += xty[i];
    return draw_from_canonical(precision, linear, rng);
  }

 private:
  LowerTriangular chol_;
  Vector white_y_;
  Matrix white_x_;
  double half_logdet_;
};

}  // namespace

double dense_loglik(const Dataset& data, std::span<const double> beta, const CovarianceParams& params) {
  const LowerTriangular l = cholesky(marginal_cov(data.locations, params));
  Vector e = data.residual(beta);
  trsolve_in_place(l, e);
  return -0.5 * logdet_from_chol(l) - 0.5 * dot(e, e);
}

KrigingResult krige(const Dataset& data, std::span<const double> beta, const CovarianceParams& params,
                    const PointSet& targets, const Matrix& x_targets) {
  if (x_targets.rows() != targets.size() || x_targets.cols() != data.p())
    throw LengthMismatch("krige: target regressors have wrong shape");
  const LowerTriangular l = cholesky(marginal_cov(data.locations, params));
  Vector white_e = data.residual(beta);
  trsolve_in_place(l, white_e);

  // Row t of k0ᵀ; whiten all targets at once: L⁻¹ K(U, targets).
  const Matrix white_k = trsolve(l, cross_cov(data.locations, targets, params));
  const Vector fixed = matvec(x_targets, beta);
  const double total = params.sigma2 + params.tau2;

  KrigingResult out;
  out.mean.resize(targets.size());
  out.variance.resize(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double m = 0.0;
    double q = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double k = white_k(i, t);
      m += k * white_e[i];
      q += k * k;
    }
    out.mean[t] = fixed[t] + m;
    out.variance[t] = std::clamp(total - q, 0.0, total);
  }
  return out;
}

Matrix predict(const Dataset& data, std::span<const ParameterDraw> draws, const PointSet& targets,
               const Matrix& x_targets, Rng& rng) {
  Matrix out(draws.size(), targets.size());
  for (std::size_t d = 0; d < draws.size(); ++d) {
    const KrigingResult k = krige(data, draws[d].beta, draws[d].params, targets, x_targets);
    for (std::size_t t = 0; t < targets.size(); ++t)
      out(d, t) = k.mean[t] + std::sqrt(k.variance[t]) * rng.normal();
  }
  return out;
}

FullGpBackend::FullGpBackend(Dataset data, CovFamily family, double nu)
    : data_(std::move(data)), family_(family), nu_(nu) {
  data_.validate();
}

CovarianceParams FullGpBackend::base_params() const {
  CovarianceParams p;
  p.family = family_;
  p.nu = nu_;
  return p;
}

std::unique_ptr<ParameterState> FullGpBackend::factorize(const CovarianceParams& params) {
  return std::make_unique<DenseState>(data_, params);
}

}  // namespace geostat::fullgp
