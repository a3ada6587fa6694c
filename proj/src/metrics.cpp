#include "geostat/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "geostat/errors.hpp"
#include "geostat/mcmc.hpp"

namespace geostat::metrics {

double rmspe(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) throw LengthMismatch("rmspe: lengths differ");
  if (truth.empty()) throw LengthMismatch("rmspe: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - predicted[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(truth.size()));
}

double kl_gaussians(std::span<const double> mean0, const Matrix& cov0, std::span<const double> mean1,
                    const Matrix& cov1) {
  const std::size_t n = mean0.size();
  if (mean1.size() != n || cov0.rows() != n || cov1.rows() != n || !cov0.square() || !cov1.square())
    throw LengthMismatch("kl_gaussians: shapes differ");
  const LowerTriangular l0 = cholesky(cov0);
  const LowerTriangular l1 = cholesky(cov1);
  // tr(S1⁻¹ S0) = ||L1⁻¹ L0||_F²
  const double fro = frobenius_norm(trsolve(l1, l0.matrix()));
  Vector diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = mean1[i] - mean0[i];
  trsolve_in_place(l1, diff);
  const double kl =
      0.5 * (fro * fro - static_cast<double>(n) + dot(diff, diff) + logdet_from_chol(l1) - logdet_from_chol(l0));
  return std::max(kl, 0.0);
}

double interval_coverage(std::span<const double> truth, std::span<const double> lo, std::span<const double> hi) {
  if (truth.size() != lo.size() || truth.size() != hi.size())
    throw LengthMismatch("interval_coverage: lengths differ");
  if (truth.empty()) throw LengthMismatch("interval_coverage: empty input");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= lo[i] && truth[i] <= hi[i]) ++inside;
  return static_cast<double>(inside) / static_cast<double>(truth.size());
}

PredictiveSummary summarize_predictive(const Matrix& draws) {
  if (draws.rows() < 2) throw InsufficientDraws("predictive summaries need at least two draws");
  PredictiveSummary s;
  const std::size_t t = draws.cols();
  s.mean.resize(t);
  s.sd.resize(t);
  s.q025.resize(t);
  s.q975.resize(t);
  Vector col(draws.rows());
  for (std::size_t j = 0; j < t; ++j) {
    for (std::size_t i = 0; i < draws.rows(); ++i) col[i] = draws(i, j);
    const mcmc::ParamSummary p = mcmc::summarize_values("", col);
    s.mean[j] = p.mean;
    s.sd[j] = p.sd;
    s.q025[j] = p.q025;
    s.q975[j] = p.q975;
  }
  return s;
}

PredictionScore score(std::span<const double> truth, const PredictiveSummary& summary) {
  return PredictionScore{rmspe(truth, summary.mean), interval_coverage(truth, summary.q025, summary.q975),
                         truth.size()};
}

}  // namespace geostat::metrics
