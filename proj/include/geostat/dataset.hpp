#pragma once

#include <cstddef>
#include <span>

#include "geostat/covariance.hpp"
#include "geostat/linalg.hpp"

namespace geostat {

// Observed locations, n x p regressors (intercept included) and outcomes.
struct Dataset {
  PointSet locations;
  Matrix x;
  Vector y;

  std::size_t n() const noexcept { return y.size(); }
  std::size_t p() const noexcept { return x.cols(); }

  // Row counts agree, p < n, and X has full column rank.
  void validate() const;

  Dataset subset(std::span<const std::size_t> rows) const;

  // y - X beta
  Vector residual(std::span<const double> beta) const;
};

// Rows of `x` selected by `rows`, in that order.
Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows);

// Ordinary least squares estimate of beta.
Vector ols_beta(const Dataset& data);

}  // namespace geostat
