#pragma once

#include <cstddef>
#include <span>

#include "geostat/linalg.hpp"

namespace geostat::metrics {

// sqrt(mean((truth - predicted)²))
double rmspe(std::span<const double> truth, std::span<const double> predicted);

// KL(N(mean0, cov0) || N(mean1, cov1)).
double kl_gaussians(std::span<const double> mean0, const Matrix& cov0, std::span<const double> mean1,
                    const Matrix& cov1);

// Fraction of truth values inside [lo, hi].
double interval_coverage(std::span<const double> truth, std::span<const double> lo, std::span<const double> hi);

struct PredictionScore {
  double rmspe = 0.0;
  double coverage95 = 0.0;
  std::size_t n_holdout = 0;
};

// Per-target mean, sd and equal-tail 95% interval of predictive draws
// (rows = draws, cols = targets).
struct PredictiveSummary {
  Vector mean;
  Vector sd;
  Vector q025;
  Vector q975;
};
PredictiveSummary summarize_predictive(const Matrix& draws);

// RMSPE of the predictive means and coverage of the 95% intervals.
PredictionScore score(std::span<const double> truth, const PredictiveSummary& summary);

}  // namespace geostat::metrics
