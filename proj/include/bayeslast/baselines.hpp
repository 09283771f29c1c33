#pragma once

// Comparison methods: a network trained on squared error followed by Bayesian
// linear regression on its frozen features, and a mean-field variational
// network trained with reparameterized gradients.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bayeslast/calibrate.hpp"
#include "bayeslast/dataset.hpp"
#include "bayeslast/last_layer.hpp"
#include "bayeslast/net.hpp"

namespace bayeslast {

// ---------------------------------------------------------------------------
// Squared-error network
// ---------------------------------------------------------------------------

struct MseResult {
  MlpParams params;
  Standardizer scaling;
  TrainHistory history;
  Dataset fit_data;
  Dataset monitor_data;
};

// Mean squared error in standardized units, early-stopped like `train`.
MseResult train_mse(const MlpSpec& spec, const Dataset& train_data, const TrainConfig& cfg);
MseResult train_mse(const MlpSpec& spec, const Dataset& train_data, const Dataset& validation,
                    const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Bayesian linear regression on frozen features
// ---------------------------------------------------------------------------

struct BlrConfig {
  std::size_t max_iterations = 5000;
  AdamConfig adam{.learning_rate = 1e-2};
  // Stops once the accepted objective improves by less than this over
  // `window` accepted steps.
  double tolerance = 1e-9;
  std::size_t window = 50;
  double min_learning_rate = 1e-10;
  double init_log_alpha = 0.0;
  double init_log_sigma_e = 0.0;

  void validate() const;
};

struct BlrResult {
  BlrModel model;
  Vector objective;  // accepted objective values, non-increasing
};

// Optimizes wbar, alpha and sigma_e on the fixed features of `frozen`. A step
// that raises the objective is rejected and the learning rate halved. wbar
// is replaced by its closed form at the end. `d` is in data units.
BlrResult blr_fit(const MlpParams& frozen, const Standardizer& scaling, const Dataset& d,
                  const BlrConfig& cfg);

// ---------------------------------------------------------------------------
// Mean-field variational network
// ---------------------------------------------------------------------------

inline constexpr double kHiddenPriorVariance = 0.5;

struct ViParams {
  std::vector<Matrix> mean;
  std::vector<Matrix> rho;  // spread = softplus(rho)
  std::vector<Activation> activations;
  double log_last_prior_sd = 0.0;
  Vector log_sigma_e;
  Standardizer scaling;

  std::size_t layers() const { return mean.size(); }
  Matrix spread(std::size_t layer) const;
  // Deterministic network at the variational means.
  MlpParams mean_params() const;
  // Noise standard deviation per output in data units.
  Vector noise_sd() const;
};

struct ViConfig {
  TrainConfig train{};
  std::size_t n_mc = 1;
  double init_spread = 0.05;
};

// softplus^{-1}(s).
double inverse_softplus(double s);

// KL(N(mean, diag(spread^2)) || N(0, prior_var)) summed over entries.
double kl_diag_gaussian(const Matrix& mean, const Matrix& spread, double prior_var);

// Per-sample negative evidence lower bound on standardized data for the given
// noise draws (one per layer and Monte Carlo sample). Exposed for tests.
LossFn vi_loss(Matrix inputs, Matrix targets, std::vector<Activation> activations,
               std::vector<std::vector<Matrix>> noise);

// Packs mean and rho blocks as weights [mean_0..mean_L, rho_0..rho_L] and
// aux [log last prior sd, log sigma_e...] for use with `grad`.
MlpParams vi_pack(const ViParams& p);
Vector vi_aux(const ViParams& p);

struct ViTrainResult {
  ViParams params;
  TrainHistory history;
};

ViTrainResult vi_train(const MlpSpec& spec, const Dataset& train_data, const ViConfig& cfg);
ViTrainResult vi_train(const MlpSpec& spec, const Dataset& train_data, const Dataset& validation,
                       const ViConfig& cfg);

// Mixture of N equally weighted Gaussians sharing one noise variance per
// output; all in data units.
struct GmmPredictive {
  Matrix means;     // N x n_y
  Vector noise_var;

  std::size_t components() const { return means.rows(); }
  Vector mean() const;
  // Mixture variance per output: noise plus spread of component means.
  Vector variance() const;
};

// log (1/N) sum_k N(t; means_k, diag(noise_var)), via log-sum-exp.
double gmm_lpd(const GmmPredictive& pred, std::span<const double> t);

// One weight draw per component; x in data units.
GmmPredictive vi_predict(const ViParams& p, std::span<const double> x, std::size_t n, Rng& rng);

// Draws n weight samples once and evaluates every row of `inputs` with them.
std::vector<GmmPredictive> vi_predict_batch(const ViParams& p, const Matrix& inputs,
                                            std::size_t n, Rng& rng);

// Mean gmm_lpd over a dataset using a shared batch of n weight samples.
double vi_lpd(const ViParams& p, const Dataset& d, std::size_t n, std::uint64_t seed);

}  // namespace bayeslast
