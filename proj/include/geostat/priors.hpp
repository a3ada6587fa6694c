#pragma once

#include <cstddef>

#include "geostat/covariance.hpp"
#include "geostat/linalg.hpp"

namespace geostat {

struct InverseGamma {
  double shape = 2.0;
  double scale = 1.0;
  double log_pdf(double x) const;
};

struct UniformPrior {
  double lo = 0.0;
  double hi = 1.0;
  double log_pdf(double x) const;
};

// Normal(mean, cov) prior on beta, or the improper flat prior.
struct BetaPrior {
  bool flat = true;
  Vector mean;
  Matrix cov;

  // V⁻¹ (zero for the flat prior) and V⁻¹ mu.
  Matrix precision(std::size_t p) const;
  Vector precision_times_mean(std::size_t p) const;
};

struct PriorSpec {
  InverseGamma sigma2;
  InverseGamma tau2;
  UniformPrior phi;
  BetaPrior beta;

  void validate() const;
  // ln p(sigma2) + ln p(tau2) + ln p(phi); -inf outside the support.
  double log_density(const CovarianceParams& params) const;
};

}  // namespace geostat
