#include "geostat/covariance.hpp"

#include <cmath>

#include "geostat/errors.hpp"

namespace geostat {

PointSet::PointSet(std::size_t dim, std::vector<double> coords)
    : dim_(dim), coords_(std::move(coords)) {
  if (dim_ == 0) throw InputError("PointSet: dimension must be at least 1");
  if (coords_.size() % dim_ != 0) throw InputError("PointSet: coordinate count not a multiple of dim");
  for (double c : coords_)
    if (!std::isfinite(c)) throw InputError("PointSet: non-finite coordinate");
}

void PointSet::push_back(Location p) {
  if (dim_ == 0) dim_ = p.size();
  if (p.size() != dim_) throw InputError("PointSet: dimension mismatch");
  for (double c : p)
    if (!std::isfinite(c)) throw InputError("PointSet: non-finite coordinate");
  coords_.insert(coords_.end(), p.begin(), p.end());
}

PointSet PointSet::permuted(std::span<const std::size_t> order) const {
  PointSet out(dim_);
  out.coords_.reserve(order.size() * dim_);
  for (std::size_t k : order) {
    const Location p = (*this)[k];
    out.coords_.insert(out.coords_.end(), p.begin(), p.end());
  }
  return out;
}

double distance(Location a, Location b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

std::string to_string(CovFamily f) { return f == CovFamily::Exponential ? "exponential" : "matern"; }

CovFamily cov_family_from_string(const std::string& s) {
  if (s == "exponential") return CovFamily::Exponential;
  if (s == "matern") return CovFamily::Matern;
  throw InvalidParams("unknown covariance family '" + s + "'");
}

void CovarianceParams::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidParams("sigma2 must be positive and finite");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw InvalidParams("phi must be positive and finite");
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw InvalidParams("tau2 must be non-negative and finite");
  if (family == CovFamily::Matern && (!(nu > 0.0) || !std::isfinite(nu)))
    throw InvalidParams("nu must be positive for the Matern family");
}

double correlation(double d, const CovarianceParams& p) {
  const double x = p.phi * d;
  if (p.family == CovFamily::Exponential) return std::exp(-x);
  if (x < 1e-12) return 1.0;
  // Past this point the value underflows well below double precision.
  if (x > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - p.nu) / std::tgamma(p.nu) * std::pow(x, p.nu) *
         std::cyl_bessel_k(p.nu, x);
}

double kernel(Location a, Location b, const CovarianceParams& p) {
  p.validate();
  return p.sigma2 * correlation(distance(a, b), p);
}

Matrix cross_cov(const PointSet& u, const PointSet& v, const CovarianceParams& p) {
  p.validate();
  if (u.empty() || v.empty()) throw InputError("cross_cov: empty point set");
  if (u.dim() != v.dim()) throw InputError("cross_cov: dimension mismatch");
  Matrix k(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Location ui = u[i];
    double* row = k.data() + i * v.size();
    for (std::size_t j = 0; j < v.size(); ++j) row[j] = p.sigma2 * correlation(distance(ui, v[j]), p);
  }
  return k;
}

Matrix marginal_cov(const PointSet& u, const CovarianceParams& p) {
  p.validate();
  if (u.empty()) throw InputError("marginal_cov: empty point set");
  const std::size_t n = u.size();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = p.sigma2 + p.tau2;
    for (std::size_t j = 0; j < i; ++j) {
      const double d = distance(u[i], u[j]);
      if (d == 0.0)
        throw DuplicateLocation("marginal_cov: locations " + std::to_string(j) + " and " +
                                std::to_string(i) + " coincide");
      const double c = p.sigma2 * correlation(d, p);
      k(i, j) = c;
      k(j, i) = c;
    }
  }
  return k;
}

double effective_range(const CovarianceParams& p, double threshold) {
  p.validate();
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidParams("effective_range: threshold must be in (0, 1)");
  if (p.family == CovFamily::Exponential) return -std::log(threshold) / p.phi;
  // Bracket, then bisect on the monotone correlation.
  double lo = 0.0;
  double hi = 1.0 / p.phi;
  while (correlation(hi, p) > threshold) hi *= 2.0;
  while ((hi - lo) > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (correlation(mid, p) > threshold)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace geostat
