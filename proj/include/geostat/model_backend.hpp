#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "geostat/covariance.hpp"
#include "geostat/linalg.hpp"
#include "geostat/priors.hpp"
#include "geostat/rng.hpp"

namespace geostat {

// One retained posterior draw of (theta, tau2, beta).
struct ParameterDraw {
  CovarianceParams params;
  Vector beta;
};

// Everything a backend precomputes for one value of (sigma2, tau2, phi).
class ParameterState {
 public:
  virtual ~ParameterState() = default;

  // ln N(y | X beta, Sigma) with the -(n/2) ln 2 pi constant dropped. Latent
  // backends return the joint density of (y, w) at their current w.
  virtual double log_likelihood(std::span<const double> beta) const = 0;

  // One draw from the full conditional of beta.
  virtual Vector draw_beta(const BetaPrior& prior, Rng& rng) const = 0;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual std::string tag() const = 0;
  virtual std::size_t num_beta() const = 0;

  // Family and smoothness; sigma2/tau2/phi come from the sampler.
  virtual CovarianceParams base_params() const = 0;

  virtual std::unique_ptr<ParameterState> factorize(const CovarianceParams& params) = 0;

  virtual bool has_latent() const { return false; }
  virtual void update_latent(const ParameterState& /*state*/, std::span<const double> /*beta*/,
                             Rng& /*rng*/) {}
  virtual Vector latent() const { return {}; }
};

}  // namespace geostat
