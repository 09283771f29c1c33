#include <cmath>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "bayeslast/errors.hpp"
#include "bayeslast/numerics.hpp"

using namespace bayeslast;

TEST_CASE("matrix basics") {
  const Matrix a{{1, 2, 3}, {4, 5, 6}};
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  CHECK(a(1, 2) == 6);
  CHECK(transpose(a) == Matrix{{1, 4}, {2, 5}, {3, 6}});
  CHECK(matmul(a, transpose(a)) == Matrix{{14, 32}, {32, 77}});
  CHECK(gram(a) == matmul(transpose(a), a));
  CHECK(matvec(a, Vector{1, 1, 1}) == Vector{6, 15});
  CHECK(trace(Matrix{{1, 2}, {3, 4}}) == 5);
  CHECK_THROWS_AS(matmul(a, a), DimensionMismatch);
  CHECK_THROWS_AS(a + Matrix(3, 2), DimensionMismatch);
}

TEST_CASE("kronecker product layout") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{0, 5}, {6, 7}};
  const Matrix k = kron(a, b);
  REQUIRE(k.rows() == 4);
  CHECK(k(0, 1) == 5);
  CHECK(k(1, 0) == 6);
  CHECK(k(2, 3) == 20);
  CHECK(k(2, 1) == 15);
  CHECK(k(3, 2) == 24);
  CHECK(k(3, 3) == 28);
}

TEST_CASE("cholesky of a 2x2 by hand") {
  const CholeskyFactor f = cholesky(Matrix{{2, 1}, {1, 1}});
  CHECK(f.lower(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(f.lower(0, 1) == 0.0);
  CHECK(f.lower(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(f.lower(1, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(logdet_pd(f) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("cholesky rejects bad input") {
  CHECK_THROWS_AS(cholesky(Matrix{{1, 2}, {2, 1}}), NotPositiveDefinite);
  CHECK_THROWS_AS(cholesky(Matrix(2, 3)), DimensionMismatch);
  CHECK_THROWS_AS(cholesky(Matrix{{1, 0.5}, {0.4, 1}}), std::invalid_argument);
  // Rank-one matrix succeeds only once jitter is added.
  const Matrix singular{{1, 1}, {1, 1}};
  CHECK_THROWS_AS(cholesky(singular), NotPositiveDefinite);
  CHECK_NOTHROW(cholesky_with_fallback(singular));
  CHECK(default_jitter(Matrix{{2, 0}, {0, 4}}) == doctest::Approx(3e-9));
}

TEST_CASE("cholesky round trip and solves against elimination") {
  oracle::Random rnd(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = rnd.integer(1, 7);
    const Matrix g = rnd.matrix(n + 2, n);
    Matrix a = gram(g);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 0.1;
    const CholeskyFactor f = cholesky(a);
    CHECK(max_abs(reconstruct(f) - a) < 1e-12 * (1 + max_abs(a)));

    const Vector b = rnd.vector(n);
    const auto ref = oracle::eliminate(oracle::nested(a), {b});
    const Vector x = solve_pd(f, b);
    for (std::size_t i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(ref.solution[0][i]).epsilon(1e-9));
    CHECK(logdet_pd(f) == doctest::Approx(ref.logdet).epsilon(1e-12));
    CHECK(inv_quadratic(f, b) == doctest::Approx(dot(b, x)).epsilon(1e-10));

    const Matrix inv = inverse_pd(f);
    CHECK(max_abs(matmul(inv, a) - Matrix::identity(n)) < 1e-8);
    CHECK(inv == transpose(inv));
  }
}

TEST_CASE("lu solve and singular detection") {
  oracle::Random rnd(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = rnd.integer(1, 8);
    const Matrix a = rnd.matrix(n, n);
    const Matrix b = rnd.matrix(n, 2);
    const Matrix x = solve_lu(a, b);
    CHECK(max_abs(matmul(a, x) - b) < 1e-9 * (1 + max_abs(b)));
  }
  CHECK_THROWS_AS(solve_lu(Matrix{{1, 2}, {2, 4}}, Matrix(2, 1, 1.0)), SingularSystem);
}

TEST_CASE("rng is deterministic and substreams differ") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  const Rng root(5);
  Rng s1 = root.substream(1), s1b = root.substream(1), s2 = root.substream(2);
  const double u = s1.uniform();
  CHECK(u == s1b.uniform());
  CHECK(u != s2.uniform());
}

TEST_CASE("rng moments") {
  Rng r(3);
  const std::size_t n = 200000;
  double s = 0, s2 = 0, umin = 1, umax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
    const double u = r.uniform();
    umin = std::min(umin, u);
    umax = std::max(umax, u);
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
  CHECK(umin >= 0.0);
  CHECK(umax < 1.0);
}

TEST_CASE("permutation is a bijection") {
  Rng r(9);
  const auto p = permutation(r, 50);
  const std::set<std::size_t> seen(p.begin(), p.end());
  CHECK(seen.size() == 50);
  CHECK(*seen.rbegin() == 49);
  for (int i = 0; i < 100; ++i) CHECK(r.below(7) < 7);
}
