#pragma once

// Affine cost of a query feature vector relative to the training features:
//
//   c(phi~) = min_{nu, e} |nu|^2 + gamma |e|^2
//             s.t. Phi~^T nu + e = phi~,  sum(nu) = 1
//
// Small values mean phi~ is (close to) an affine combination of training
// features with small coefficients; points off the affine hull pay gamma per
// unit squared residual. With gamma = alpha the cost equals the BLL function
// variance divided by sigma_e^2.

#include <span>

#include "bayeslast/last_layer.hpp"
#include "bayeslast/numerics.hpp"

namespace bayeslast {

struct AffineCostResult {
  double cost = 0.0;
  Vector nu;        // spanning coefficients, length m
  Vector residual;  // e, length n_phi~
};

// phi^T (Phi^T Phi + gamma^{-1} I~)^{-1} phi with phi = [phi~, 1].
// `linear_features` is Phi~ (m x n_phi~, no ones column).
double affine_cost_closed(const Matrix& linear_features, std::span<const double> query,
                          double gamma);

// Solves the constrained least-squares problem through its full KKT system
// with a pivoted LU factorization. Throws SingularKkt on a singular system.
AffineCostResult affine_cost_kkt(const Matrix& linear_features, std::span<const double> query,
                                 double gamma);

struct AffineEquivalence {
  double lhs = 0.0;  // affine cost of phi~(x) with the given gamma
  double rhs = 0.0;  // sigma_e^{-2} sigma_y(x)
};

// gamma defaults to the model's alpha, in which case lhs == rhs.
AffineEquivalence bll_affine_equivalence(const BllModel& model, std::span<const double> x);
AffineEquivalence bll_affine_equivalence(const BllModel& model, std::span<const double> x,
                                         double gamma);

// Training features without the trailing ones column.
Matrix linear_part(const Matrix& affine_features);

}  // namespace bayeslast
