#pragma once

// Dense linear algebra for the small systems that appear in last-layer
// inference (n_phi up to a few dozen, m up to a few hundred), plus a seeded
// random number generator whose stream is fixed across platforms.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "bayeslast/errors.hpp"

namespace bayeslast {

using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, Vector entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);
  static Matrix row(std::span<const double> values);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  Vector col_vector(std::size_t c) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
// a^T a without forming the transpose.
Matrix gram(const Matrix& a);
Vector matvec(const Matrix& a, std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs(std::span<const double> a);
double trace(const Matrix& a);
bool all_finite(const Matrix& a);
bool all_finite(std::span<const double> a);
// Kronecker product a (x) b.
Matrix kron(const Matrix& a, const Matrix& b);

// ---------------------------------------------------------------------------
// Cholesky
// ---------------------------------------------------------------------------

struct CholeskyFactor {
  Matrix lower;
  std::size_t dim() const { return lower.rows(); }
};

// Factor a + jitter * I. Requires a square and symmetric to 1e-10 relative.
CholeskyFactor cholesky(const Matrix& a, double jitter = 0.0);

// 1e-9 * trace(a) / dim.
double default_jitter(const Matrix& a);

// Factor without jitter first; on failure retry with default_jitter(a)
// scaled up by 10x per attempt (at most 4 attempts).
CholeskyFactor cholesky_with_fallback(const Matrix& a);

double logdet_pd(const CholeskyFactor& f);
Matrix solve_pd(const CholeskyFactor& f, const Matrix& b);
Vector solve_pd(const CholeskyFactor& f, std::span<const double> b);
Matrix inverse_pd(const CholeskyFactor& f);
// x^T A^{-1} x as the squared norm of L^{-1} x.
double inv_quadratic(const CholeskyFactor& f, std::span<const double> x);
Matrix reconstruct(const CholeskyFactor& f);

// Dense LU with partial pivoting for general square systems. Throws
// SingularSystem when a pivot falls below tol * max|a|.
Matrix solve_lu(Matrix a, Matrix b, double tol = 1e-13);

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

// xoshiro256** seeded through splitmix64. Normal deviates use Box-Muller so
// the stream does not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  std::uint64_t below(std::uint64_t n);

  // Independent stream derived from this generator's seed and a stream id;
  // does not advance this generator.
  Rng substream(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Vector standard_normal(Rng& rng, std::size_t n);

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace bayeslast
