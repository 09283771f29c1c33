#include "bayeslast/extrapolation.hpp"

#include <stdexcept>

namespace bayeslast {

namespace {

Matrix with_ones(const Matrix& linear) {
  Matrix out(linear.rows(), linear.cols() + 1, 1.0);
  for (std::size_t r = 0; r < linear.rows(); ++r)
    for (std::size_t c = 0; c < linear.cols(); ++c) out(r, c) = linear(r, c);
  return out;
}

void check_args(const Matrix& linear_features, std::span<const double> query, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("affine cost: gamma must be positive");
  if (linear_features.rows() == 0) throw std::invalid_argument("affine cost: no training rows");
  if (linear_features.cols() != query.size()) {
    throw DimensionMismatch("affine cost: query length != feature dimension");
  }
}

}  // namespace

Matrix linear_part(const Matrix& affine_features) {
  if (affine_features.cols() == 0) throw DimensionMismatch("linear_part: empty feature matrix");
  Matrix out(affine_features.rows(), affine_features.cols() - 1);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = affine_features(r, c);
  return out;
}

double affine_cost_closed(const Matrix& linear_features, std::span<const double> query,
                          double gamma) {
  check_args(linear_features, query, gamma);
  const CholeskyFactor f = cholesky(precision_bar(with_ones(linear_features), gamma));
  Vector phi(query.begin(), query.end());
  phi.push_back(1.0);
  return inv_quadratic(f, phi);
}

AffineCostResult affine_cost_kkt(const Matrix& linear_features, std::span<const double> query,
                                 double gamma) {
  check_args(linear_features, query, gamma);
  const std::size_t m = linear_features.rows();
  const std::size_t n = linear_features.cols();
  const std::size_t np = m + n;      // primal variables [nu, e]
  const std::size_t nc = n + 1;      // constraints
  const std::size_t dim = np + nc;

  // [ 2W  D^T ] [p     ]   [0  ]
  // [ D   0   ] [lambda] = [phi]
  // with W = diag(I_m, gamma I_n) and D = [Phi~^T I_n; 1^T 0].
  Matrix kkt(dim, dim);
  for (std::size_t i = 0; i < m; ++i) kkt(i, i) = 2.0;
  for (std::size_t i = 0; i < n; ++i) kkt(m + i, m + i) = 2.0 * gamma;
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t j = 0; j < m; ++j) {
      kkt(np + c, j) = linear_features(j, c);
      kkt(j, np + c) = linear_features(j, c);
    }
    kkt(np + c, m + c) = 1.0;
    kkt(m + c, np + c) = 1.0;
  }
  for (std::size_t j = 0; j < m; ++j) {
    kkt(np + n, j) = 1.0;
    kkt(j, np + n) = 1.0;
  }
  Matrix rhs(dim, 1);
  for (std::size_t c = 0; c < n; ++c) rhs(np + c, 0) = query[c];
  rhs(np + n, 0) = 1.0;

  Matrix sol;
  try {
    sol = solve_lu(std::move(kkt), std::move(rhs));
  } catch (const SingularSystem& e) {
    throw SingularKkt(std::string("affine_cost_kkt: ") + e.what());
  }

  AffineCostResult out;
  out.nu.resize(m);
  out.residual.resize(n);
  for (std::size_t j = 0; j < m; ++j) out.nu[j] = sol(j, 0);
  for (std::size_t c = 0; c < n; ++c) out.residual[c] = sol(m + c, 0);
  out.cost = dot(out.nu, out.nu) + gamma * dot(out.residual, out.residual);
  return out;
}

AffineEquivalence bll_affine_equivalence(const BllModel& model, std::span<const double> x,
                                         double gamma) {
  const Vector phi = feature_vector(model, x);
  AffineEquivalence eq;
  eq.lhs = affine_cost_closed(linear_part(model.train_features), phi, gamma);
  const PredictiveDistribution p = predict(model, x);
  const Vector sd = model.noise_sd();
  eq.rhs = p.sigma_y[0] / (sd[0] * sd[0]);
  return eq;
}

AffineEquivalence bll_affine_equivalence(const BllModel& model, std::span<const double> x) {
  return bll_affine_equivalence(model, x, model.alpha());
}

}  // namespace bayeslast
