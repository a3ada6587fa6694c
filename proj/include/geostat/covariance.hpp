#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geostat/linalg.hpp"

namespace geostat {

// A location is a view over d coordinates.
using Location = std::span<const double>;

// Ordered collection of d-dimensional locations, stored row-major.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(std::size_t dim) : dim_(dim) {}
  PointSet(std::size_t dim, std::vector<double> coords);

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return coords_.empty(); }

  Location operator[](std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  void push_back(Location p);
  const std::vector<double>& coords() const noexcept { return coords_; }

  // Points reordered so that result[k] = (*this)[order[k]].
  PointSet permuted(std::span<const std::size_t> order) const;
  PointSet subset(std::span<const std::size_t> indices) const { return permuted(indices); }

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

double distance(Location a, Location b);

enum class CovFamily { Exponential, Matern };

std::string to_string(CovFamily f);
CovFamily cov_family_from_string(const std::string& s);

// Partial sill sigma2, decay phi (per distance unit), Matérn smoothness nu and
// nugget tau2. The nugget never enters `kernel`; callers add it explicitly.
struct CovarianceParams {
  CovFamily family = CovFamily::Exponential;
  double sigma2 = 1.0;
  double phi = 1.0;
  double nu = 0.5;
  double tau2 = 0.0;

  void validate() const;
};

// Correlation rho(d) with rho(0) = 1.
double correlation(double d, const CovarianceParams& p);

// sigma2 * rho(|a - b|).
double kernel(Location a, Location b, const CovarianceParams& p);

// |U| x |V| matrix of kernel values; duplicates across U and V are allowed.
Matrix cross_cov(const PointSet& u, const PointSet& v, const CovarianceParams& p);

// cross_cov(U, U) + tau2 I. Throws DuplicateLocation on repeated points.
Matrix marginal_cov(const PointSet& u, const CovarianceParams& p);

// Distance at which the correlation falls to `threshold`.
double effective_range(const CovarianceParams& p, double threshold = 0.05);

}  // namespace geostat
