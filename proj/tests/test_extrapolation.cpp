#include <cmath>
#include <type_traits>

#include "doctest.h"
#include "oracles.hpp"
#include "bayeslast/errors.hpp"
#include "bayeslast/extrapolation.hpp"

using namespace bayeslast;

namespace {

// Closed-form cost without the library: phi^T (Phi^T Phi + gamma^{-1} I~)^{-1} phi.
double oracle_cost(const Matrix& linear, const Vector& query, double gamma) {
  const std::size_t m = linear.rows(), n = linear.cols() + 1;
  Matrix lambda(n, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double a = i + 1 < n ? linear(r, i) : 1.0;
        const double b = j + 1 < n ? linear(r, j) : 1.0;
        lambda(i, j) += a * b;
      }
  for (std::size_t i = 0; i + 1 < n; ++i) lambda(i, i) += 1.0 / gamma;
  Vector phi(query.begin(), query.end());
  phi.push_back(1.0);
  return oracle::inverse_quadratic(lambda, phi);
}

}  // namespace

TEST_CASE("toy costs by hand") {
  // One training feature at 1: the training point itself costs 1 with
  // gamma = 1; a query at 3 pays for the larger combination.
  const Matrix single{{1.0}};
  CHECK(affine_cost_closed(single, Vector{1.0}, 1.0) == doctest::Approx(1.0));
  CHECK(affine_cost_kkt(single, Vector{1.0}, 1.0).cost == doctest::Approx(1.0));
  CHECK(affine_cost_closed(single, Vector{3.0}, 1.0) == doctest::Approx(5.0));

  // Two training features at -1 and 1: the midpoint is the even mixture.
  const Matrix pair{{-1.0}, {1.0}};
  const AffineCostResult mid = affine_cost_kkt(pair, Vector{0.0}, 1.0);
  CHECK(mid.cost == doctest::Approx(0.5));
  CHECK(mid.nu[0] == doctest::Approx(0.5));
  CHECK(mid.nu[1] == doctest::Approx(0.5));
  CHECK(std::abs(mid.residual[0]) < 1e-12);
  CHECK(affine_cost_closed(pair, Vector{3.0}, 1.0) == doctest::Approx(oracle_cost(pair, {3.0}, 1.0)));
}

TEST_CASE("kkt solution agrees with the closed form") {
  oracle::Random rnd(31);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = rnd.integer(1, 10), n = rnd.integer(1, 5);
    const Matrix linear = trial % 3 == 0 ? rnd.low_rank(m, n, 1) : rnd.matrix(m, n);
    const Vector query = rnd.vector(n, 2.0);
    const double gamma = std::exp(rnd.uniform(-3, 3));
    const AffineCostResult kkt = affine_cost_kkt(linear, query, gamma);
    const double closed = affine_cost_closed(linear, query, gamma);
    CHECK(oracle::rel_error(kkt.cost, closed) < 1e-8);
    CHECK(oracle::rel_error(closed, oracle_cost(linear, query, gamma)) < 1e-8);

    // Feasibility and the cost decomposition.
    double sum_nu = 0.0, nu2 = 0.0, e2 = 0.0;
    for (double v : kkt.nu) {
      sum_nu += v;
      nu2 += v * v;
    }
    for (double v : kkt.residual) e2 += v * v;
    CHECK(sum_nu == doctest::Approx(1.0));
    CHECK(kkt.cost == doctest::Approx(nu2 + gamma * e2).epsilon(1e-9));
    for (std::size_t j = 0; j < n; ++j) {
      double s = kkt.residual[j];
      for (std::size_t i = 0; i < m; ++i) s += linear(i, j) * kkt.nu[i];
      CHECK(s == doctest::Approx(query[j]).epsilon(1e-9));
    }
  }
}

TEST_CASE("cost grows off the affine hull") {
  // Features on a line; a query off the line pays gamma per squared unit.
  const Matrix line{{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
  const double on = affine_cost_closed(line, Vector{1.0, 0.0}, 100.0);
  const double off = affine_cost_closed(line, Vector{1.0, 0.5}, 100.0);
  CHECK(off - on == doctest::Approx(25.0).epsilon(1e-6));
}

TEST_CASE("equivalence with the predictive variance at gamma equal to alpha") {
  Rng rng(8);
  oracle::Random rnd(32);
  const MlpParams params = init_params(MlpSpec{1, {5, 3}, 1, {}}, rng);
  const Dataset d(rnd.matrix(15, 1), rnd.matrix(15, 1));
  const BllModel model = fit_posterior(params, BllHyper(1.3, Vector{-0.7}), d);
  for (double x : {-4.0, -1.0, 0.0, 0.5, 3.0}) {
    const AffineEquivalence eq = bll_affine_equivalence(model, Vector{x});
    CHECK(oracle::rel_error(eq.lhs, eq.rhs) < 1e-8);
    const AffineEquivalence other = bll_affine_equivalence(model, Vector{x}, 10 * model.alpha());
    CHECK(other.rhs == doctest::Approx(eq.rhs));
    CHECK(other.lhs >= eq.lhs * (1 - 1e-9));
  }
  CHECK(linear_part(model.train_features).cols() == 3);
}

TEST_CASE("degenerate inputs") {
  CHECK_THROWS_AS(affine_cost_kkt(Matrix{{1.0}}, Vector{1.0, 2.0}, 1.0), DimensionMismatch);
  CHECK_THROWS_AS(affine_cost_kkt(Matrix{{1.0}}, Vector{1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(affine_cost_kkt(Matrix(0, 1), Vector{1.0}, 1.0), std::invalid_argument);
  CHECK(std::is_base_of_v<SingularSystem, SingularKkt>);
}
