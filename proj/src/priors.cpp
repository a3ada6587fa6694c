#include "geostat/priors.hpp"

#include <cmath>
#include <limits>

#include "geostat/errors.hpp"

namespace geostat {

double InverseGamma::log_pdf(double x) const {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double UniformPrior::log_pdf(double x) const {
  if (!(x >= lo && x <= hi)) return -std::numeric_limits<double>::infinity();
  return -std::log(hi - lo);
}

Matrix BetaPrior::precision(std::size_t p) const {
  if (flat) return Matrix(p, p);
  if (cov.rows() != p || !cov.square()) throw LengthMismatch("beta prior covariance has wrong shape");
  return chol_inverse(cholesky(cov));
}

Vector BetaPrior::precision_times_mean(std::size_t p) const {
  if (flat) return Vector(p, 0.0);
  if (mean.size() != p) throw LengthMismatch("beta prior mean has wrong length");
  return chol_solve(cholesky(cov), mean);
}

void PriorSpec::validate() const {
  for (const InverseGamma* ig : {&sigma2, &tau2})
    if (!(ig->shape > 0.0) || !(ig->scale > 0.0))
      throw InvalidParams("inverse-gamma prior needs positive shape and scale");
  if (!(phi.lo < phi.hi) || !(phi.lo >= 0.0)) throw InvalidParams("phi prior needs 0 <= lo < hi");
  if (!beta.flat) {
    if (beta.mean.size() != beta.cov.rows() || !beta.cov.square())
      throw InvalidParams("beta prior mean and covariance disagree in size");
  }
}

double PriorSpec::log_density(const CovarianceParams& params) const {
  return sigma2.log_pdf(params.sigma2) + tau2.log_pdf(params.tau2) + phi.log_pdf(params.phi);
}

}  // namespace geostat
