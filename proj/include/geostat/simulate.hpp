#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "geostat/dataset.hpp"

namespace geostat::sim {

enum class Layout { Uniform, Grid };

struct SimDesign {
  std::string tag = "custom";
  std::size_t n = 100;
  Vector lo{0.0, 0.0};
  Vector hi{1.0, 1.0};
  Layout layout = Layout::Uniform;
  Vector beta{0.0};  // beta_0 multiplies the intercept column
  CovarianceParams params;
  double holdout_fraction = 0.0;
  std::uint64_t seed = 1;

  // n >= 2, grid layout needs a perfect-square n in two dimensions, valid
  // params, bounding box lo < hi.
  void validate() const;
};

struct SimResult {
  Dataset data;
  Vector w;                          // latent field at every location
  std::vector<std::size_t> holdout;  // ascending row indices
  std::vector<std::size_t> train;    // the complement, ascending
};

// y = X beta + w + eps with w ~ N(0, sigma2 R) drawn by dense Cholesky and
// eps ~ N(0, tau2 I). X is an intercept column followed by standard-normal
// regressors when beta has more than one entry.
SimResult simulate(const SimDesign& design);

// Uniform sample of round(fraction * n) rows without replacement.
std::vector<std::size_t> choose_holdout(std::size_t n, double fraction, std::uint64_t seed);

// fig2: 200 uniform points in the unit square, beta 0, sigma2 5, tau2 5, phi 9.
// table1: 2000 uniform points in [0, 100]², beta 1, sigma2 1, tau2 1, phi 0.06,
//   10% holdout.
// fig5: 2500 uniform points in the unit square, beta 1, sigma2 1, tau2 0.1,
//   phi = -ln(0.05) / effective_range.
// table2: 80 x 80 grid over the unit square, beta 0, sigma2 1, tau2 0.2025,
//   phi 5, 10% holdout.
// n (or the grid side) is scaled by `scale` and rounded.
SimDesign paper_design(const std::string& tag, double scale, double effective_range = 0.5);

}  // namespace geostat::sim
