#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "bayeslast/errors.hpp"
#include "bayeslast/last_layer.hpp"

using namespace bayeslast;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

MlpParams fixed_wbar(const Matrix& wbar) {
  MlpParams p;
  p.weights = {wbar};
  return p;
}

// sigma^2 (I + alpha Phi Phi^T) built entry by entry.
Matrix marginal_covariance(const Matrix& phi, double alpha, double sigma) {
  const std::size_t m = phi.rows();
  Matrix cov(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < phi.cols(); ++k) s += phi(i, k) * phi(j, k);
      cov(i, j) = sigma * sigma * ((i == j ? 1.0 : 0.0) + alpha * s);
    }
  return cov;
}

Vector column(const Matrix& m, std::size_t c) {
  Vector v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
  return v;
}

}  // namespace

TEST_CASE("single sample example by hand") {
  const Matrix phi{{1.0, 1.0}};
  const Matrix lambda = precision_bar(phi, 1.0);
  CHECK(lambda == Matrix{{2, 1}, {1, 1}});
  CHECK(precision_bar(phi, 1.0, PriorMode::Proper) == Matrix{{2, 1}, {1, 2}});

  const Matrix t{{1.0}};
  const Matrix w = closed_form_wbar(phi, t, 1.0);
  CHECK(w(0, 0) == doctest::Approx(0.0).scale(1.0));
  CHECK(w(1, 0) == doctest::Approx(1.0));

  // phi^T Lambda^{-1} phi at the training point.
  CHECK(inv_quadratic(cholesky(lambda), Vector{1.0, 1.0}) == doctest::Approx(1.0));

  const BllHyper unit(0.0, Vector{0.0});
  CHECK(neg_lml_from_features(phi, w, unit, t) == doctest::Approx(kHalfLog2Pi).epsilon(1e-14));
  CHECK(neg_lml_marginalized(phi, t, unit) == doctest::Approx(kHalfLog2Pi).epsilon(1e-14));
}

TEST_CASE("hyperparameter packing and clamping") {
  BllHyper h(20.0, Vector{-30.0, 1.0});
  CHECK(h.outputs() == 2);
  h.clamp();
  CHECK(h.log_alpha == kLogHyperBound);
  CHECK(h.log_sigma_e[0] == -kLogHyperBound);
  CHECK(BllHyper::unpack(h.packed()) == h);
  CHECK(BllHyper(std::log(4.0), Vector{std::log(0.5)}).alpha() == doctest::Approx(4.0));
  CHECK(prior_mask(3) == Vector{1, 1, 0});
  CHECK(prior_mask(3, PriorMode::Proper) == Vector{1, 1, 1});
}

TEST_CASE("closed-form mean is the stationary point of the objective") {
  oracle::Random rnd(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = rnd.integer(3, 15), nphi = rnd.integer(1, 6), ny = rnd.integer(1, 3);
    const Matrix phi = rnd.affine_features(m, nphi);
    const Matrix t = rnd.matrix(m, ny);
    Vector log_sigma(ny);
    for (double& s : log_sigma) s = rnd.uniform(-1, 1);
    const BllHyper hyper(rnd.uniform(-2, 2), log_sigma);
    const Matrix w = closed_form_wbar(phi, t, hyper.alpha());

    const LossFn loss = neg_lml_loss_fixed_features(phi, t);
    const Gradient g = grad(loss, fixed_wbar(w), hyper.packed());
    CHECK(max_abs(g.weights[0]) < 1e-10);
    CHECK(g.value == doctest::Approx(neg_lml_marginalized(phi, t, hyper)).epsilon(1e-12));

    // Any other wbar gives a larger objective.
    Matrix other = w;
    other(0, 0) += 0.1;
    CHECK(neg_lml_from_features(phi, other, hyper, t) > g.value);
  }
}

TEST_CASE("proper prior reduces to an exact Gaussian marginal likelihood") {
  oracle::Random rnd(22);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = rnd.integer(2, 10), nphi = rnd.integer(1, 5), ny = rnd.integer(1, 3);
    const Matrix phi = rnd.affine_features(m, nphi);
    const Matrix t = rnd.matrix(m, ny);
    Vector log_sigma(ny);
    for (double& s : log_sigma) s = rnd.uniform(-1, 1);
    const BllHyper hyper(rnd.uniform(-2, 2), log_sigma);

    double expected = 0.0;
    for (std::size_t i = 0; i < ny; ++i)
      expected += oracle::neg_log_gaussian(marginal_covariance(phi, hyper.alpha(), hyper.sigma_e(i)),
                                           column(t, i));
    expected /= static_cast<double>(m);
    CHECK(neg_lml_marginalized(phi, t, hyper, PriorMode::Proper) ==
          doctest::Approx(expected).epsilon(1e-10));
    const Matrix w = closed_form_wbar(phi, t, hyper.alpha(), PriorMode::Proper);
    CHECK(neg_lml_from_features(phi, w, hyper, t, PriorMode::Proper) ==
          doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("flat bias prior is invariant to a shift of the targets") {
  oracle::Random rnd(23);
  const Matrix phi = rnd.affine_features(8, 3);
  const Matrix t = rnd.matrix(8, 1);
  Matrix shifted = t;
  for (double& v : shifted.data()) v += 5.0;
  const BllHyper hyper(0.4, Vector{-0.3});
  CHECK(neg_lml_marginalized(phi, shifted, hyper) ==
        doctest::Approx(neg_lml_marginalized(phi, t, hyper)).epsilon(1e-10));
  const Matrix w = closed_form_wbar(phi, t, hyper.alpha());
  const Matrix ws = closed_form_wbar(phi, shifted, hyper.alpha());
  CHECK(ws(3, 0) - w(3, 0) == doctest::Approx(5.0));
}

TEST_CASE("full precision is the kronecker product with the noise precisions") {
  oracle::Random rnd(24);
  const Matrix lambda = precision_bar(rnd.affine_features(6, 2), 0.7);
  const Vector sigma{0.5, 2.0};
  Matrix noise(2, 2);
  noise(0, 0) = 4.0;
  noise(1, 1) = 0.25;
  CHECK(max_abs(full_precision(lambda, sigma) - kron(noise, lambda)) < 1e-12);
}

TEST_CASE("fitted posterior predictive against an elimination oracle") {
  Rng rng(4);
  oracle::Random rnd(25);
  const MlpParams params = init_params(MlpSpec{1, {6, 3}, 2, {}}, rng);
  const Matrix x = rnd.matrix(20, 1);
  const Matrix t = rnd.matrix(20, 2);
  const Dataset d(x, t);
  const BllHyper hyper(0.5, Vector{-1.0, 0.2});
  const BllModel model = fit_posterior(params, hyper, d);
  CHECK(model.wbar() == params.last_layer());

  const Matrix phi = features(params, model.scaling.transform_inputs(x));
  CHECK(max_abs(phi - model.train_features) < 1e-14);
  const Matrix lambda = precision_bar(phi, hyper.alpha());

  const Vector query{0.3};
  const PredictiveDistribution p = predict(model, query);
  const Vector f = feature_vector(model, query);
  Vector phi_q(f.begin(), f.end());
  phi_q.push_back(1.0);
  const double q = oracle::inverse_quadratic(lambda, phi_q);
  CHECK(scaled_variance(model, query) == doctest::Approx(q).epsilon(1e-10));
  const Vector sd = model.noise_sd();
  for (std::size_t i = 0; i < 2; ++i) {
    const double noise = sd[i] * sd[i];
    CHECK(p.sigma_y[i] == doctest::Approx(q * noise).epsilon(1e-10));
    CHECK(p.sigma_t[i] == doctest::Approx(p.sigma_y[i] + noise).epsilon(1e-12));
  }

  // Changing alpha refactors the precision but keeps everything else.
  const BllModel other = with_log_alpha(model, 3.0);
  CHECK(other.wbar() == model.wbar());
  CHECK(other.hyper.log_sigma_e == model.hyper.log_sigma_e);
  CHECK(other.hyper.log_alpha == 3.0);
  CHECK(predict(other, query).mean == p.mean);
  CHECK(predict(other, query).sigma_y[0] > p.sigma_y[0]);
}

TEST_CASE("shape mismatches throw") {
  const Matrix phi{{1.0, 1.0}, {0.5, 1.0}};
  CHECK_THROWS_AS(closed_form_wbar(phi, Matrix(3, 1), 1.0), DimensionMismatch);
  CHECK_THROWS_AS(neg_lml_from_features(phi, Matrix(3, 1), BllHyper(0.0, Vector{0.0}), Matrix(2, 1)),
                  DimensionMismatch);
}
