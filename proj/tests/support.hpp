#pragma once

// Independent dense oracles for the tests. Nothing here calls the library's
// Cholesky; inverses and determinants go through Gauss-Jordan with partial
// pivoting so that a bug in the factorization cannot hide itself.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "geostat/covariance.hpp"
#include "geostat/dataset.hpp"
#include "geostat/linalg.hpp"

namespace testing_support {

using geostat::Matrix;
using geostat::PointSet;
using geostat::Vector;

inline PointSet random_points(std::size_t n, std::mt19937_64& gen, double lo = 0.0, double hi = 1.0,
                              std::size_t dim = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> c(n * dim);
  for (double& v : c) v = u(gen);
  return PointSet(dim, std::move(c));
}

inline Matrix random_spd(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> z;
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = z(gen);
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += a(i, k) * a(j, k);
      s(i, j) = acc + (i == j ? static_cast<double>(n) : 0.0);
    }
  return s;
}

inline Matrix naive_mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

inline Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Gauss-Jordan inverse together with ln|det| and the sign of the determinant.
struct Inverted {
  Matrix inv;
  double logabsdet = 0.0;
  int sign = 1;
};

inline Inverted gauss_jordan(const Matrix& m) {
  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix inv = Matrix::identity(n);
  Inverted out;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    if (a(piv, c) == 0.0) throw std::runtime_error("singular");
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a(c, j), a(piv, j));
        std::swap(inv(c, j), inv(piv, j));
      }
      out.sign = -out.sign;
    }
    const double p = a(c, c);
    out.logabsdet += std::log(std::abs(p));
    if (p < 0) out.sign = -out.sign;
    for (std::size_t j = 0; j < n; ++j) {
      a(c, j) /= p;
      inv(c, j) /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  out.inv = std::move(inv);
  return out;
}

// Laplace expansion along the first row.
inline double cofactor_det(const Matrix& m) {
  const std::size_t n = m.rows();
  if (n == 1) return m(0, 0);
  double det = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (std::size_t r = 1; r < n; ++r) {
      std::size_t cc = 0;
      for (std::size_t c = 0; c < n; ++c) {
        if (c == j) continue;
        minor(r - 1, cc++) = m(r, c);
      }
    }
    det += ((j % 2 == 0) ? 1.0 : -1.0) * m(0, j) * cofactor_det(minor);
  }
  return det;
}

// ln N(e | 0, S) without the -(n/2) ln 2 pi constant.
inline double dense_log_density(const Matrix& s, const Vector& e) {
  const Inverted g = gauss_jordan(s);
  double q = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = 0; j < e.size(); ++j) q += e[i] * g.inv(i, j) * e[j];
  return -0.5 * g.logabsdet - 0.5 * q;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

// Conditional of a zero-mean Gaussian: moments of x_a given x_b = v.
struct Conditional {
  Vector mean;
  Matrix cov;
};

inline Conditional condition(const Matrix& s, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                             const Vector& v) {
  Matrix sbb(b.size(), b.size());
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) sbb(i, j) = s(b[i], b[j]);
  Matrix inv = b.empty() ? Matrix() : gauss_jordan(sbb).inv;
  Conditional c{Vector(a.size(), 0.0), Matrix(a.size(), a.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    Vector kinv(b.size(), 0.0);
    for (std::size_t j = 0; j < b.size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) kinv[j] += s(a[i], b[k]) * inv(k, j);
    for (std::size_t j = 0; j < b.size(); ++j) c.mean[i] += kinv[j] * v[j];
    for (std::size_t l = 0; l < a.size(); ++l) {
      double acc = s(a[i], a[l]);
      for (std::size_t j = 0; j < b.size(); ++j) acc -= kinv[j] * s(b[j], a[l]);
      c.cov(i, l) = acc;
    }
  }
  return c;
}

// Intercept plus `extra` standard-normal regressors; y arbitrary normal.
inline geostat::Dataset random_dataset(std::size_t n, std::size_t extra, std::mt19937_64& gen,
                                       double lo = 0.0, double hi = 1.0) {
  std::normal_distribution<double> z;
  geostat::Dataset d;
  d.locations = random_points(n, gen, lo, hi);
  d.x = Matrix(n, 1 + extra);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.x(i, 0) = 1.0;
    for (std::size_t j = 0; j < extra; ++j) d.x(i, 1 + j) = z(gen);
    d.y[i] = z(gen);
  }
  return d;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline Vector jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  Vector ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace testing_support
