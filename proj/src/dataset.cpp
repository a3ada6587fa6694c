#include "geostat/dataset.hpp"

#include "geostat/errors.hpp"

namespace geostat {

void Dataset::validate() const {
  if (locations.size() != y.size() || x.rows() != y.size())
    throw LengthMismatch("Dataset: locations, X and y must have the same number of rows");
  if (y.empty()) throw InputError("Dataset: no observations");
  if (x.cols() == 0) throw InputError("Dataset: X has no columns");
  if (x.cols() >= y.size()) throw InputError("Dataset: need p < n");
  try {
    (void)cholesky(gram(x));
  } catch (const NotPositiveDefinite&) {
    throw InputError("Dataset: X does not have full column rank");
  }
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = x.row(rows[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.locations = locations.subset(rows);
  out.x = select_rows(x, rows);
  out.y.reserve(rows.size());
  for (std::size_t r : rows) out.y.push_back(y[r]);
  return out;
}

Vector Dataset::residual(std::span<const double> beta) const {
  if (beta.size() != x.cols()) throw LengthMismatch("residual: beta has wrong length");
  Vector e = matvec(x, beta);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = y[i] - e[i];
  return e;
}

Vector ols_beta(const Dataset& data) {
  const LowerTriangular l = cholesky(gram(data.x));
  return chol_solve(l, matvec_t(data.x, data.y));
}

}  // namespace geostat
