#include "geostat/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geostat/errors.hpp"
#include "geostat/rng.hpp"

namespace geostat::sim {

void SimDesign::validate() const {
  if (n < 2) throw InvalidParams("design needs n >= 2");
  if (lo.size() != hi.size() || lo.empty()) throw InvalidParams("design bounding box is malformed");
  for (std::size_t k = 0; k < lo.size(); ++k)
    if (!(lo[k] < hi[k])) throw InvalidParams("design bounding box needs lo < hi");
  if (layout == Layout::Grid) {
    if (lo.size() != 2) throw InvalidParams("grid layout is two-dimensional");
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw InvalidParams("grid layout needs a perfect-square n");
  }
  if (beta.empty()) throw InvalidParams("design needs at least the intercept coefficient");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw InvalidParams("holdout fraction must be in [0, 1)");
  params.validate();
}

std::vector<std::size_t> choose_holdout(std::size_t n, double fraction, std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + std::min(n - i - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SimResult simulate(const SimDesign& design) {
  design.validate();
  Rng rng(design.seed);
  const std::size_t dim = design.lo.size();
  const std::size_t n = design.n;

  PointSet pts(dim);
  Vector p(dim);
  if (design.layout == Layout::Grid) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        p[0] = design.lo[0] + (design.hi[0] - design.lo[0]) * static_cast<double>(i) / static_cast<double>(side - 1);
        p[1] = design.lo[1] + (design.hi[1] - design.lo[1]) * static_cast<double>(j) / static_cast<double>(side - 1);
        pts.push_back(p);
      }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < dim; ++k) p[k] = design.lo[k] + (design.hi[k] - design.lo[k]) * rng.uniform();
      pts.push_back(p);
    }
  }

  const std::size_t np = design.beta.size();
  Matrix x(n, np, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 1; j < np; ++j) x(i, j) = rng.normal();

  CovarianceParams latent = design.params;
  latent.tau2 = 0.0;
  const LowerTriangular l = cholesky(cross_cov(pts, pts, latent));
  const Vector zero(n, 0.0);
  Vector w = sample_mvn(zero, l, rng);

  const double tau = std::sqrt(design.params.tau2);
  Vector y = matvec(x, design.beta);
  for (std::size_t i = 0; i < n; ++i) y[i] += w[i] + tau * rng.normal();

  SimResult out{Dataset{std::move(pts), std::move(x), std::move(y)}, std::move(w), {}, {}};
  out.holdout = choose_holdout(n, design.holdout_fraction, derive_seed(design.seed, 1));
  std::vector<char> held(n, 0);
  for (std::size_t i : out.holdout) held[i] = 1;
  for (std::size_t i = 0; i < n; ++i)
    if (!held[i]) out.train.push_back(i);
  return out;
}

SimDesign paper_design(const std::string& tag, double scale, double effective_range) {
  if (!(scale > 0.0 && scale <= 1.0)) throw InvalidParams("scale must lie in (0, 1]");
  auto scaled = [&](double n) { return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(n * scale))); };
  SimDesign d;
  d.tag = tag;
  d.params.family = CovFamily::Exponential;
  if (tag == "fig2") {
    d.n = scaled(200);
    d.beta = {0.0};
    d.params.sigma2 = 5.0;
    d.params.tau2 = 5.0;
    d.params.phi = 9.0;
  } else if (tag == "table1") {
    d.n = scaled(2000);
    d.lo = {0.0, 0.0};
    d.hi = {100.0, 100.0};
    d.beta = {1.0};
    d.params.sigma2 = 1.0;
    d.params.tau2 = 1.0;
    d.params.phi = 0.06;
    d.holdout_fraction = 0.1;
  } else if (tag == "fig5") {
    if (!(effective_range > 0.0)) throw InvalidParams("effective range must be positive");
    d.n = scaled(2500);
    d.beta = {1.0};
    d.params.sigma2 = 1.0;
    d.params.tau2 = 0.1;
    d.params.phi = -std::log(0.05) / effective_range;
  } else if (tag == "table2") {
    const auto side = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(std::sqrt(6400.0 * scale))));
    d.n = side * side;
    d.layout = Layout::Grid;
    d.beta = {0.0};
    d.params.sigma2 = 1.0;
    d.params.tau2 = 0.45 * 0.45;
    d.params.phi = 5.0;
    d.holdout_fraction = 0.1;
  } else {
    throw InvalidParams("unknown design '" + tag + "'");
  }
  return d;
}

}  // namespace geostat::sim
