#pragma once

// Bayesian last layer: a network whose output weights carry a Gaussian
// posterior while the hidden layers are point estimates.
//
// Notation used throughout:
//   Phi      m x n_phi training feature matrix, last column all ones
//   alpha    sigma_w^2 / sigma_e^2, one value shared by all outputs
//   Lambda   Phi^T Phi + alpha^{-1} diag(1, ..., 1, 0)   (noise-scaled precision)
//   wbar     n_phi x n_y posterior mean of the output weights
//
// The training objective is the negative log marginal likelihood divided by
// m, with wbar promoted to a free variable so no inverse of Lambda appears
// in the objective:
//
//   J = n_y/(2m) (m log 2pi + n_phi log alpha + log det Lambda)
//       + sum_i [ log sigma_i + 1/(2m) sigma_i^{-2} (|t_i - Phi wbar_i|^2
//                                                  + alpha^{-1} |wbar_i|~^2) ]
//
// where |.|~ skips the bias entry (the bias prior is flat). Setting
// dJ/dwbar = 0 recovers the closed-form posterior mean Lambda^{-1} Phi^T t.

#include <cstddef>
#include <span>
#include <vector>

#include "bayeslast/autodiff.hpp"
#include "bayeslast/dataset.hpp"
#include "bayeslast/net.hpp"
#include "bayeslast/numerics.hpp"

namespace bayeslast {

inline constexpr double kLogHyperBound = 15.0;

// FlatBias is the model proper: no prior precision on the bias weight.
// Proper replaces the masked identity by the full identity, which turns the
// objective into an exact Gaussian marginal likelihood; used by the oracles.
enum class PriorMode { FlatBias, Proper };

struct BllHyper {
  double log_alpha = 0.0;
  Vector log_sigma_e;  // one per output

  BllHyper() = default;
  BllHyper(double log_alpha_, Vector log_sigma_e_);

  std::size_t outputs() const { return log_sigma_e.size(); }
  double alpha() const;
  double sigma_e(std::size_t i) const;
  // Clamps every log parameter to [-15, 15].
  void clamp();
  // [log alpha, log sigma_1, ..., log sigma_ny]
  Vector packed() const;
  static BllHyper unpack(std::span<const double> packed);

  bool operator==(const BllHyper&) const = default;
};

// Diagonal of the prior precision pattern: ones, with a zero for the bias in
// FlatBias mode.
Vector prior_mask(std::size_t n_phi, PriorMode mode = PriorMode::FlatBias);

Matrix precision_bar(const Matrix& phi, double alpha, PriorMode mode = PriorMode::FlatBias);

// Solves Lambda wbar = Phi^T T column by column. sigma_e cancels.
Matrix closed_form_wbar(const Matrix& phi, const Matrix& targets, double alpha,
                        PriorMode mode = PriorMode::FlatBias);

// Records J on a tape given the (taped) feature matrix and output weights.
// log_alpha is 1x1 and log_sigma is 1 x n_y.
ad::Var neg_lml_graph(const ad::Var& phi, const ad::Var& wbar, const ad::Var& log_alpha,
                      const ad::Var& log_sigma, const Matrix& targets,
                      PriorMode mode = PriorMode::FlatBias);

// J as a loss over all network weights (the last one is wbar) with
// aux = [log alpha, log sigma_1, ..., log sigma_ny]. Inputs and targets are
// used as given (no standardization).
LossFn neg_lml_loss(Matrix inputs, Matrix targets, std::vector<Activation> activations,
                    PriorMode mode = PriorMode::FlatBias);

// Same objective with the hidden layers frozen into a fixed feature matrix;
// `weights` holds only wbar.
LossFn neg_lml_loss_fixed_features(Matrix phi, Matrix targets,
                                   PriorMode mode = PriorMode::FlatBias);

// Augmented objective for a single-output dataset.
double neg_lml_augmented(const MlpParams& params, const BllHyper& hyper, const Dataset& d,
                         PriorMode mode = PriorMode::FlatBias);

// Augmented objective for any number of outputs sharing one alpha.
double neg_lml_multivariate(const MlpParams& params, const BllHyper& hyper, const Dataset& d,
                            PriorMode mode = PriorMode::FlatBias);

// Augmented objective from precomputed features and explicit wbar.
double neg_lml_from_features(const Matrix& phi, const Matrix& wbar, const BllHyper& hyper,
                             const Matrix& targets, PriorMode mode = PriorMode::FlatBias);

// The objective with wbar eliminated analytically, using
// |t - Phi wbar|^2 + alpha^{-1}|wbar|~^2 = t^T t - t^T Phi Lambda^{-1} Phi^T t.
// Independent of the taped path.
double neg_lml_marginalized(const Matrix& phi, const Matrix& targets, const BllHyper& hyper,
                            PriorMode mode = PriorMode::FlatBias);

// Precision of vec(W): diag(sigma_e^{-2}) (x) Lambda.
Matrix full_precision(const Matrix& lambda_bar, std::span<const double> sigma_e);

struct PredictiveDistribution {
  Vector mean;
  Vector sigma_y;  // variance of the noise-free output
  Vector sigma_t;  // sigma_y + sigma_e^2
};

// Posterior over the output layer of a trained network. All internal
// quantities live in standardized units; `scaling` maps user data in and
// predictions back out.
struct BllModel {
  MlpParams params;  // last layer holds wbar
  BllHyper hyper;
  CholeskyFactor precision_factor;  // Cholesky of Lambda
  Matrix train_features;            // Phi of the fitting data
  Matrix train_targets;             // standardized targets of the fitting data
  Standardizer scaling;
  // max |wbar_trained - Lambda^{-1} Phi^T t| at fit time.
  double wbar_gap = 0.0;

  const Matrix& wbar() const { return params.last_layer(); }
  double alpha() const { return hyper.alpha(); }
  // Noise standard deviation per output in data units.
  Vector noise_sd() const;
};

// Bayesian linear regression on frozen features shares the model type and
// therefore the predictive path.
using BlrModel = BllModel;

// `d` is in data units; it is mapped through `scaling` before the features
// are computed.
BllModel fit_posterior(const MlpParams& params, const BllHyper& hyper, const Dataset& d,
                       const Standardizer& scaling);
BllModel fit_posterior(const MlpParams& params, const BllHyper& hyper, const Dataset& d);

// Augmented objective on the fitting data at the model's current
// parameters, in data units (adds sum_i log target_scale_i).
double train_neg_lml(const BllModel& model);

// Same model with alpha replaced; only Lambda is refactored.
BllModel with_log_alpha(const BllModel& model, double log_alpha);

PredictiveDistribution predict(const BllModel& model, std::span<const double> x);
std::vector<PredictiveDistribution> predict(const BllModel& model, const Matrix& inputs);

// phi^T Lambda^{-1} phi at x (x in data units); sigma_y_i = sigma_{e,i}^2 * this.
double scaled_variance(const BllModel& model, std::span<const double> x);

// phi~(x) for x in data units.
Vector feature_vector(const BllModel& model, std::span<const double> x);

}  // namespace bayeslast
