#include "geostat/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "geostat/errors.hpp"

namespace geostat {

namespace {

constexpr double kPivotFloor = 1e-12;
constexpr double kJitter = 1e-10;
constexpr double kSymmetryTol = 1e-10;
constexpr double kTinyDiagonal = 1e-300;

inline double dot_n(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

inline void axpy_n(double alpha, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

// Row-oriented (Cholesky-Banachiewicz) factorization; returns false on a
// pivot at or below `floor`.
bool factor_rows(const Matrix& m, double shift, double floor, Matrix& l) {
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double* li = l.data() + i * n;
    for (std::size_t j = 0; j < i; ++j) {
      const double* lj = l.data() + j * n;
      li[j] = (m(i, j) - dot_n(li, lj, j)) / lj[j];
    }
    const double pivot = m(i, i) + shift - dot_n(li, li, i);
    if (!(pivot > floor)) return false;
    li[i] = std::sqrt(pivot);
  }
  return true;
}

void check_square(const Matrix& m, const char* what) {
  if (!m.square()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw InputError(os.str());
  }
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InputError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

void Matrix::add_to_diagonal(double value) {
  const std::size_t n = std::min(rows_, cols_);
  for (std::size_t i = 0; i < n; ++i) (*this)(i, i) += value;
}

LowerTriangular cholesky(const Matrix& m) {
  check_square(m, "cholesky");
  const std::size_t n = m.rows();
  double max_diag = 0.0;
  double sum_diag = 0.0;
  double max_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    max_diag = std::max(max_diag, m(i, i));
    sum_diag += m(i, i);
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v)) throw NotPositiveDefinite("cholesky: non-finite entry");
      max_abs = std::max(max_abs, std::abs(v));
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(m(i, j) - m(j, i)) > kSymmetryTol * max_abs)
        throw InputError("cholesky: matrix is not symmetric");
  if (n == 0) return LowerTriangular(Matrix());
  if (!(max_diag > 0.0)) throw NotPositiveDefinite("cholesky: non-positive diagonal");

  const double floor = kPivotFloor * max_diag;
  Matrix l(n, n);
  if (factor_rows(m, 0.0, floor, l)) return LowerTriangular(std::move(l));
  std::fill(l.data(), l.data() + n * n, 0.0);
  if (factor_rows(m, kJitter * sum_diag / static_cast<double>(n), floor, l))
    return LowerTriangular(std::move(l));
  throw NotPositiveDefinite("cholesky: matrix is not positive definite (order " +
                            std::to_string(n) + ")");
}

void trsolve_in_place(const LowerTriangular& t, std::span<double> b, Transpose trans) {
  const std::size_t n = t.order();
  if (b.size() != n) throw LengthMismatch("trsolve: right-hand side has wrong length");
  const Matrix& l = t.matrix();
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(l(i, i)) < kTinyDiagonal) throw ZeroDiagonal("trsolve: zero diagonal entry");
  if (trans == Transpose::No) {
    for (std::size_t i = 0; i < n; ++i) b[i] = (b[i] - dot_n(l.data() + i * n, b.data(), i)) / l(i, i);
  } else {
    for (std::size_t i = n; i-- > 0;) {
      b[i] /= l(i, i);
      axpy_n(-b[i], l.data() + i * n, b.data(), i);
    }
  }
}

Vector trsolve(const LowerTriangular& t, std::span<const double> b, Transpose trans) {
  Vector x(b.begin(), b.end());
  trsolve_in_place(t, x, trans);
  return x;
}

Matrix trsolve(const LowerTriangular& t, const Matrix& b, Transpose trans) {
  const std::size_t n = t.order();
  if (b.rows() != n) throw LengthMismatch("trsolve: right-hand side has wrong row count");
  const Matrix& l = t.matrix();
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(l(i, i)) < kTinyDiagonal) throw ZeroDiagonal("trsolve: zero diagonal entry");
  Matrix x = b;
  const std::size_t k = b.cols();
  // Column panels keep the n x panel working set in cache when k is large;
  // every column sees the same operations in the same order either way.
  constexpr std::size_t kPanel = 256;
  for (std::size_t c0 = 0; c0 < k; c0 += kPanel) {
    const std::size_t w = std::min(kPanel, k - c0);
    double* base = x.data() + c0;
    if (trans == Transpose::No) {
      for (std::size_t i = 0; i < n; ++i) {
        double* xi = base + i * k;
        for (std::size_t j = 0; j < i; ++j) {
          const double lij = l(i, j);
          if (lij != 0.0) axpy_n(-lij, base + j * k, xi, w);
        }
        const double inv = 1.0 / l(i, i);
        for (std::size_t c = 0; c < w; ++c) xi[c] *= inv;
      }
    } else {
      for (std::size_t i = n; i-- > 0;) {
        double* xi = base + i * k;
        const double inv = 1.0 / l(i, i);
        for (std::size_t c = 0; c < w; ++c) xi[c] *= inv;
        for (std::size_t j = 0; j < i; ++j) {
          const double lij = l(i, j);
          if (lij != 0.0) axpy_n(-lij, xi, base + j * k, w);
        }
      }
    }
  }
  return x;
}

double logdet_from_chol(const LowerTriangular& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.order(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Vector sample_mvn(std::span<const double> mean, const LowerTriangular& l, Rng& rng) {
  const std::size_t n = l.order();
  if (mean.size() != n) throw LengthMismatch("sample_mvn: mean and factor disagree in size");
  Vector z(n);
  for (auto& v : z) v = rng.normal();
  Vector out(mean.begin(), mean.end());
  const Matrix& m = l.matrix();
  for (std::size_t i = 0; i < n; ++i) out[i] += dot_n(m.data() + i * n, z.data(), i + 1);
  return out;
}

Vector chol_solve(const LowerTriangular& l, std::span<const double> b) {
  Vector x(b.begin(), b.end());
  trsolve_in_place(l, x, Transpose::No);
  trsolve_in_place(l, x, Transpose::Yes);
  return x;
}

Matrix chol_inverse(const LowerTriangular& l) {
  const std::size_t n = l.order();
  Matrix inv = trsolve(l, Matrix::identity(n), Transpose::No);
  inv = trsolve(l, inv, Transpose::Yes);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = v;
      inv(j, i) = v;
    }
  return inv;
}

Vector draw_from_canonical(const Matrix& precision, std::span<const double> linear, Rng& rng) {
  const LowerTriangular l = cholesky(precision);
  Vector mean = chol_solve(l, linear);
  Vector z(l.order());
  for (auto& v : z) v = rng.normal();
  trsolve_in_place(l, z, Transpose::Yes);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += z[i];
  return mean;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw LengthMismatch("dot: length mismatch");
  return dot_n(a.data(), b.data(), a.size());
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw LengthMismatch("multiply: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik != 0.0) axpy_n(aik, b.data() + k * b.cols(), c.data() + i * c.cols(), b.cols());
    }
  return c;
}

Matrix multiply_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw LengthMismatch("multiply_at_b: row counts differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki != 0.0) axpy_n(aki, b.data() + k * b.cols(), c.data() + i * c.cols(), b.cols());
    }
  return c;
}

Matrix multiply_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw LengthMismatch("multiply_a_bt: column counts differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j)
      c(i, j) = dot_n(a.data() + i * a.cols(), b.data() + j * b.cols(), a.cols());
  return c;
}

Matrix gram(const Matrix& a) {
  const std::size_t r = a.cols();
  Matrix c(r, r);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ak = a.data() + k * r;
    for (std::size_t i = 0; i < r; ++i) {
      const double aki = ak[i];
      if (aki != 0.0) axpy_n(aki, ak + i, c.data() + i * r + i, r - i);
    }
  }
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < i; ++j) c(i, j) = c(j, i);
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw LengthMismatch("matvec: length mismatch");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot_n(a.data() + i * a.cols(), x.data(), x.size());
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw LengthMismatch("matvec_t: length mismatch");
  Vector y(a.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k)
    if (x[k] != 0.0) axpy_n(x[k], a.data() + k * a.cols(), y.data(), a.cols());
  return y;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw LengthMismatch("subtract: shape mismatch");
  Matrix c = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) -= b(i, j);
  return c;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace geostat
