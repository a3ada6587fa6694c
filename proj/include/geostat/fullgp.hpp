#pragma once

#include <memory>
#include <span>
#include <vector>

#include "geostat/dataset.hpp"
#include "geostat/model_backend.hpp"

namespace geostat::fullgp {

// ln N(y | X beta, sigma2 R + tau2 I) without the -(n/2) ln 2 pi term.
double dense_loglik(const Dataset& data, std::span<const double> beta, const CovarianceParams& params);

struct KrigingResult {
  Vector mean;
  Vector variance;
};

// Conditional mean and variance of y at each target given the observed data.
// The target variance is sigma2 + tau2 - k0ᵀ Sigma⁻¹ k0 (clamped to >= 0).
KrigingResult krige(const Dataset& data, std::span<const double> beta, const CovarianceParams& params,
                    const PointSet& targets, const Matrix& x_targets);

// Posterior predictive draws (rows = draws, cols = targets).
Matrix predict(const Dataset& data, std::span<const ParameterDraw> draws, const PointSet& targets,
               const Matrix& x_targets, Rng& rng);

// Dense O(n³) backend: the exact reference for every approximation.
class FullGpBackend : public ModelBackend {
 public:
  FullGpBackend(Dataset data, CovFamily family = CovFamily::Exponential, double nu = 0.5);

  std::string tag() const override { return "fullgp"; }
  std::size_t num_beta() const override { return data_.p(); }
  CovarianceParams base_params() const override;
  std::unique_ptr<ParameterState> factorize(const CovarianceParams& params) override;

  const Dataset& data() const { return data_; }

 private:
  Dataset data_;
  CovFamily family_;
  double nu_;
};

}  // namespace geostat::fullgp
