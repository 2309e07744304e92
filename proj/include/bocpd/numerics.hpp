#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace bocpd {

/// Dense row-major real matrix with dimensions fixed at construction.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix column(std::span<const double> values);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;
  double trace() const;

  /// Frobenius norm.
  double norm() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }
  friend Matrix operator*(const Matrix& a, const Matrix& b);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using RectMatrix = Matrix;

/// Square matrix kept exactly symmetric. Construction symmetrizes with (A + Aᵀ)/2.
/// Positive definiteness is checked only when factorizing.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim, double fill = 0.0) : m_(dim, dim, fill) {}
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
  static SymMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    return SymMatrix(Matrix::from_rows(rows));
  }

  std::size_t dim() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  const Matrix& matrix() const noexcept { return m_; }
  operator const Matrix&() const noexcept { return m_; }

  /// Adds sign * v vᵀ, writing both triangles from the same product.
  void add_outer(std::span<const double> v, double sign = 1.0);

  /// Adds c to every diagonal entry.
  void add_diagonal(double c);

  double trace() const { return m_.trace(); }

  SymMatrix& operator+=(const SymMatrix& other) {
    m_ += other.m_;
    return *this;
  }
  SymMatrix& operator-=(const SymMatrix& other) {
    m_ -= other.m_;
    return *this;
  }
  SymMatrix& operator*=(double s) {
    m_ *= s;
    return *this;
  }
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
  friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }

  bool operator==(const SymMatrix& other) const = default;

 private:
  Matrix m_;
};

struct Cholesky {
  Matrix factor;  ///< lower triangular L with L Lᵀ = A
  double logdet = 0.0;
};

/// Unblocked Cholesky. Throws NotPositiveDefinite when a pivot is not positive.
Cholesky cholesky_logdet(const SymMatrix& a);

/// Solves A X = B for symmetric positive definite A.
Matrix solve_spd(const SymMatrix& a, const Matrix& b);

/// Solves with an existing factor: forward then back substitution, in place on b.
void cholesky_solve_in_place(const Matrix& factor, Matrix& b);

/// Inverse of an SPD matrix via its Cholesky factor.
SymMatrix inverse_spd(const SymMatrix& a);

/// log of the multivariate gamma function Γ_d(a). Requires a > (d-1)/2.
double log_multigamma(int d, double a);

/// ψ(x) for x > 0, recurrence up to x >= 10 then the asymptotic series.
double digamma(double x);

/// log Σ exp(v_i); -inf for an empty range or when every term is -inf.
double log_sum_exp(std::span<const double> values);

/// log(exp(a) + exp(b)).
double log_add_exp(double a, double b);

}  // namespace bocpd
