#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "geostat/rng.hpp"

namespace geostat {

using Vector = std::vector<double>;

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<const double> values() const noexcept { return data_; }

  Matrix transpose() const;
  void add_to_diagonal(double value);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Lower-triangular Cholesky factor; the strict upper part is zero.
class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(Matrix m) : m_(std::move(m)) {}

  std::size_t order() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const noexcept { return m_; }

 private:
  Matrix m_;
};

enum class Transpose { No, Yes };

// M = L Lᵀ. Retries once with a small diagonal jitter when a pivot falls
// below 1e-12 of the largest diagonal entry; throws NotPositiveDefinite if
// the jittered retry fails as well.
LowerTriangular cholesky(const Matrix& m);

// Solves T X = B (Transpose::No) or Tᵀ X = B (Transpose::Yes).
Matrix trsolve(const LowerTriangular& t, const Matrix& b, Transpose trans = Transpose::No);
Vector trsolve(const LowerTriangular& t, std::span<const double> b,
               Transpose trans = Transpose::No);
void trsolve_in_place(const LowerTriangular& t, std::span<double> b,
                      Transpose trans = Transpose::No);

// ln det(L Lᵀ).
double logdet_from_chol(const LowerTriangular& l);

// mean + L z with z standard normal.
Vector sample_mvn(std::span<const double> mean, const LowerTriangular& l, Rng& rng);

// (L Lᵀ)⁻¹ b and (L Lᵀ)⁻¹.
Vector chol_solve(const LowerTriangular& l, std::span<const double> b);
Matrix chol_inverse(const LowerTriangular& l);

// Draw from N(P⁻¹ h, P⁻¹) given precision P and linear term h:
// mean by two triangular solves, noise by trsolve(Lᵀ, z).
Vector draw_from_canonical(const Matrix& precision, std::span<const double> linear, Rng& rng);

double dot(std::span<const double> a, std::span<const double> b);
Matrix multiply(const Matrix& a, const Matrix& b);
Matrix multiply_at_b(const Matrix& a, const Matrix& b);  // Aᵀ B
Matrix multiply_a_bt(const Matrix& a, const Matrix& b);  // A Bᵀ
Matrix gram(const Matrix& a);                            // Aᵀ A
Vector matvec(const Matrix& a, std::span<const double> x);
Vector matvec_t(const Matrix& a, std::span<const double> x);  // Aᵀ x
Matrix subtract(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);

}  // namespace geostat
