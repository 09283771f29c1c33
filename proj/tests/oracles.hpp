#pragma once

// Reference computations written independently of the library: plain
// Gaussian elimination, dense Gaussian densities and random instance
// generation with the standard library engine.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "bayeslast/numerics.hpp"

namespace oracle {

using bayeslast::Matrix;
using bayeslast::Vector;

struct Elimination {
  double logdet = 0.0;  // log |det A|
  int sign = 1;
  std::vector<std::vector<double>> solution;  // one column per right-hand side
};

// Gauss-Jordan with partial pivoting on row-major nested vectors.
inline Elimination eliminate(std::vector<std::vector<double>> a,
                             std::vector<std::vector<double>> rhs_cols) {
  const std::size_t n = a.size();
  const std::size_t k = rhs_cols.size();
  std::vector<std::vector<double>> b(n, std::vector<double>(k));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i) b[i][j] = rhs_cols[j][i];
  Elimination out;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    if (a[p][c] == 0.0) throw std::runtime_error("oracle: singular");
    if (p != c) {
      std::swap(a[p], a[c]);
      std::swap(b[p], b[c]);
      out.sign = -out.sign;
    }
    const double piv = a[c][c];
    out.logdet += std::log(std::abs(piv));
    if (piv < 0) out.sign = -out.sign;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / piv;
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a[r][j] -= f * a[c][j];
      for (std::size_t j = 0; j < k; ++j) b[r][j] -= f * b[c][j];
    }
  }
  out.solution.assign(k, std::vector<double>(n));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i) out.solution[j][i] = b[i][j] / a[i][i];
  return out;
}

inline std::vector<std::vector<double>> nested(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

// -log N(t; 0, cov) by elimination.
inline double neg_log_gaussian(const Matrix& cov, const Vector& t) {
  const Elimination e = eliminate(nested(cov), {t});
  double q = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) q += t[i] * e.solution[0][i];
  return 0.5 * (static_cast<double>(t.size()) * std::log(2.0 * std::numbers::pi) + e.logdet + q);
}

// x^T A^{-1} x by elimination.
inline double inverse_quadratic(const Matrix& a, const Vector& x) {
  const Elimination e = eliminate(nested(a), {x});
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += x[i] * e.solution[0][i];
  return q;
}

class Random {
 public:
  explicit Random(unsigned seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t integer(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }

  Matrix matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = scale * normal();
    return m;
  }

  Vector vector(std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = scale * normal();
    return v;
  }

  // Random rows with a trailing column of ones.
  Matrix affine_features(std::size_t rows, std::size_t linear_cols) {
    Matrix m(rows, linear_cols + 1, 1.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < linear_cols; ++c) m(r, c) = std::tanh(normal());
    return m;
  }

  // rows x cols matrix of rank at most `rank`.
  Matrix low_rank(std::size_t rows, std::size_t cols, std::size_t rank) {
    const Matrix a = matrix(rows, rank);
    const Matrix b = matrix(rank, cols);
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t k = 0; k < rank; ++k) out(r, c) += a(r, k) * b(k, c);
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Relative error with an absolute floor on the scale.
inline double rel_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
